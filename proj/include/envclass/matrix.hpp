#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "envclass/csv.hpp"
#include "envclass/features.hpp"
#include "envclass/util.hpp"

namespace envclass {

/// One extracted feature row, traceable back to its source record.
struct MatrixRow {
    std::string session_id;
    std::int64_t record_index = 0;  // position within the session, 0-based
    std::string label;              // empty when the source was unlabeled
    std::vector<double> values;
};

/// A feature matrix plus the provenance needed to split and train on it.
struct FeatureMatrix {
    std::string layout_name;
    std::vector<std::string> feature_names;
    std::vector<MatrixRow> rows;

    size_t width() const { return feature_names.size(); }
};

inline void write_matrix_csv(std::ostream& os, const FeatureMatrix& m) {
    std::vector<std::string> header = {"session_id", "record_index", "label"};
    header.insert(header.end(), m.feature_names.begin(), m.feature_names.end());
    csv::write_row(os, header);
    std::vector<std::string> row;
    for (const auto& r : m.rows) {
        row.clear();
        row.push_back(r.session_id);
        row.push_back(std::to_string(r.record_index));
        row.push_back(r.label);
        if (r.values.size() != m.width()) {
            throw Error("matrix row for session '" + r.session_id + "' has " +
                        std::to_string(r.values.size()) + " values, expected " +
                        std::to_string(m.width()));
        }
        for (double v : r.values) row.push_back(format_double(v));
        csv::write_row(os, row);
    }
}

inline FeatureMatrix read_matrix_csv(std::istream& is, const std::string& what = "matrix file") {
    auto table = csv::read_table(is, what);
    if (table.header.size() < 4 || table.header[0] != "session_id" ||
        table.header[1] != "record_index" || table.header[2] != "label") {
        throw Error(what + ": header must begin with session_id,record_index,label");
    }
    FeatureMatrix m;
    m.feature_names.assign(table.header.begin() + 3, table.header.end());
    const FeatureLayout* matched = nullptr;
    for (LayoutId id :
         {LayoutId::All72, LayoutId::No6Ghz67, LayoutId::No6GhzNoNr40, LayoutId::Best4}) {
        if (layout(id).features == m.feature_names) {
            matched = &layout(id);
            break;
        }
    }
    if (!matched) throw Error(what + ": feature columns do not match any known layout");
    m.layout_name = matched->name;
    for (const auto& row : table.rows) {
        MatrixRow r;
        r.session_id = row[0];
        r.record_index = parse_int(row[1]);
        r.label = row[2];
        r.values.reserve(m.width());
        for (size_t j = 3; j < row.size(); ++j) r.values.push_back(parse_double(row[j]));
        m.rows.push_back(std::move(r));
    }
    return m;
}

/// Sidecar written next to every matrix: the min-max parameters fitted over
/// the whole matrix, plus a fingerprint of the dataset it came from.
struct MatrixSidecar {
    std::string layout_name;
    MinMaxNormalizer normalizer;
    std::string source_dataset_fingerprint;

    nlohmann::json to_json() const {
        return nlohmann::json{{"layout", layout_name},
                              {"normalization", "minmax"},
                              {"scope", "full_matrix"},
                              {"normalizer", normalizer.to_json()},
                              {"source_dataset_fingerprint", source_dataset_fingerprint}};
    }

    static MatrixSidecar from_json(const nlohmann::json& j) {
        MatrixSidecar s;
        s.layout_name = j.at("layout").get<std::string>();
        s.normalizer = MinMaxNormalizer::from_json(j.at("normalizer"));
        s.source_dataset_fingerprint = j.at("source_dataset_fingerprint").get<std::string>();
        return s;
    }
};

/// Stable content hash used to tie matrices and bundles back to a dataset.
inline std::string fingerprint_bytes(std::string_view bytes) {
    return to_hex64(fnv1a64(bytes));
}

}  // namespace envclass
