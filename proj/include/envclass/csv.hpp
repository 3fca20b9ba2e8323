#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "envclass/error.hpp"

namespace envclass {
namespace csv {

/// Quote a field if it contains a separator, quote, or newline.
inline std::string encode_field(const std::string& field) {
    bool needs_quoting = false;
    for (char c : field) {
        if (c == ',' || c == '"' || c == '\n' || c == '\r') {
            needs_quoting = true;
            break;
        }
    }
    if (!needs_quoting) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out.push_back('"');
    return out;
}

inline void write_row(std::ostream& os, const std::vector<std::string>& fields) {
    for (size_t i = 0; i < fields.size(); ++i) {
        if (i) os.put(',');
        os << encode_field(fields[i]);
    }
    os.put('\n');
}

/// Read one CSV row (RFC 4180 quoting, LF or CRLF). Returns false at EOF.
inline bool read_row(std::istream& is, std::vector<std::string>& fields) {
    fields.clear();
    int c = is.get();
    if (c == EOF) return false;
    std::string field;
    bool in_quotes = false;
    while (true) {
        if (c == EOF) {
            fields.push_back(std::move(field));
            return true;
        }
        if (in_quotes) {
            if (c == '"') {
                int next = is.get();
                if (next == '"') {
                    field.push_back('"');
                } else {
                    in_quotes = false;
                    c = next;
                    continue;
                }
            } else {
                field.push_back(static_cast<char>(c));
            }
        } else if (c == '"' && field.empty()) {
            in_quotes = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            if (!field.empty() && field.back() == '\r') field.pop_back();
            fields.push_back(std::move(field));
            return true;
        } else {
            field.push_back(static_cast<char>(c));
        }
        c = is.get();
    }
}

/// Read the whole stream; first row is the header.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline Table read_table(std::istream& is, const std::string& what) {
    Table t;
    if (!read_row(is, t.header)) throw Error(what + ": empty file, header row required");
    std::vector<std::string> row;
    size_t line = 1;
    while (read_row(is, row)) {
        ++line;
        if (row.size() == 1 && row[0].empty()) continue;  // trailing blank line
        if (row.size() != t.header.size()) {
            throw Error(what + ": row " + std::to_string(line) + " has " +
                        std::to_string(row.size()) + " fields, header has " +
                        std::to_string(t.header.size()));
        }
        t.rows.push_back(row);
    }
    return t;
}

}  // namespace csv
}  // namespace envclass
