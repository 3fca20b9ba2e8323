#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include "envclass/error.hpp"

namespace envclass {

/// UTC instants are milliseconds since the Unix epoch.
using UtcMillis = std::int64_t;

namespace detail {

// Days from civil date, Howard Hinnant's algorithm (public domain).
inline std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp + (mp < 10 ? 3 : -9);
    y = static_cast<int>(yy + (m <= 2));
}

inline int digits(std::string_view s, size_t pos, size_t n) {
    int v = 0;
    if (pos + n > s.size()) throw Error("timestamp too short: '" + std::string(s) + "'");
    for (size_t i = pos; i < pos + n; ++i) {
        if (s[i] < '0' || s[i] > '9') throw Error("bad timestamp: '" + std::string(s) + "'");
        v = v * 10 + (s[i] - '0');
    }
    return v;
}

}  // namespace detail

/// Parse an ISO-8601 timestamp (YYYY-MM-DDTHH:MM:SS[.fff][Z|±hh:mm]) to UTC
/// milliseconds. A missing zone designator is read as UTC.
inline UtcMillis parse_iso8601(std::string_view s) {
    using namespace detail;
    if (s.size() < 19) throw Error("bad timestamp: '" + std::string(s) + "'");
    int year = digits(s, 0, 4);
    unsigned month = static_cast<unsigned>(digits(s, 5, 2));
    unsigned day = static_cast<unsigned>(digits(s, 8, 2));
    if (s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ')) {
        throw Error("bad timestamp: '" + std::string(s) + "'");
    }
    int hh = digits(s, 11, 2);
    int mm = digits(s, 14, 2);
    int ss = digits(s, 17, 2);
    if (s[13] != ':' || s[16] != ':') throw Error("bad timestamp: '" + std::string(s) + "'");
    if (month < 1 || month > 12 || day < 1 || day > 31 || hh > 23 || mm > 59 || ss > 60) {
        throw Error("bad timestamp: '" + std::string(s) + "'");
    }
    size_t pos = 19;
    int millis = 0;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        size_t start = pos;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
        if (pos == start) throw Error("bad timestamp: '" + std::string(s) + "'");
        // Truncate or pad the fraction to milliseconds.
        int scale = 100;
        for (size_t i = start; i < pos && scale > 0; ++i, scale /= 10) {
            millis += (s[i] - '0') * scale;
        }
    }
    std::int64_t offset_min = 0;
    if (pos < s.size()) {
        if (s[pos] == 'Z' || s[pos] == 'z') {
            ++pos;
        } else if (s[pos] == '+' || s[pos] == '-') {
            int sign = s[pos] == '+' ? 1 : -1;
            ++pos;
            int oh = detail::digits(s, pos, 2);
            pos += 2;
            if (pos < s.size() && s[pos] == ':') ++pos;
            int om = detail::digits(s, pos, 2);
            pos += 2;
            offset_min = sign * (oh * 60 + om);
        }
    }
    if (pos != s.size()) throw Error("bad timestamp: '" + std::string(s) + "'");
    std::int64_t days = detail::days_from_civil(year, month, day);
    std::int64_t secs = days * 86400 + hh * 3600 + mm * 60 + ss - offset_min * 60;
    return secs * 1000 + millis;
}

/// Canonical form: YYYY-MM-DDTHH:MM:SS.mmmZ (always milliseconds, always UTC).
inline std::string format_iso8601(UtcMillis t) {
    std::int64_t ms = ((t % 1000) + 1000) % 1000;
    std::int64_t secs = (t - ms) / 1000;
    std::int64_t days = secs / 86400;
    std::int64_t rem = secs % 86400;
    if (rem < 0) {
        rem += 86400;
        days -= 1;
    }
    int y;
    unsigned m, d;
    detail::civil_from_days(days, y, m, d);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02lld:%02lld:%02lld.%03lldZ", y, m, d,
                  static_cast<long long>(rem / 3600), static_cast<long long>((rem / 60) % 60),
                  static_cast<long long>(rem % 60), static_cast<long long>(ms));
    return std::string(buf);
}

}  // namespace envclass
