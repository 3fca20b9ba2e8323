#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "envclass/csv.hpp"
#include "envclass/records.hpp"
#include "envclass/util.hpp"

namespace envclass {

/// Per-entry failures that do not abort a parse.
struct RejectedRecord {
    size_t entry_index = 0;
    std::string reason;
};

struct ParseResult {
    std::vector<RawRecord> records;
    std::vector<RejectedRecord> rejects;
    size_t observations_dropped = 0;  // entries missing mandatory observation fields
};

/// Drops and survivors tallied while cleaning.
struct CleaningSummary {
    size_t lte_dropped = 0;
    size_t nr_dropped = 0;
    size_t wifi_dropped = 0;
    size_t gps_dropped = 0;
    size_t records_dropped = 0;
    size_t records_kept = 0;

    void merge(const CleaningSummary& other) {
        lte_dropped += other.lte_dropped;
        nr_dropped += other.nr_dropped;
        wifi_dropped += other.wifi_dropped;
        gps_dropped += other.gps_dropped;
        records_dropped += other.records_dropped;
        records_kept += other.records_kept;
    }
};

namespace detail {

inline std::optional<double> json_number(const nlohmann::json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_number()) return std::nullopt;
    return it->get<double>();
}

inline std::optional<std::int64_t> json_integer(const nlohmann::json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_number()) return std::nullopt;
    return it->get<std::int64_t>();
}

inline std::optional<std::string> json_string(const nlohmann::json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null() || !it->is_string()) return std::nullopt;
    return it->get<std::string>();
}

}  // namespace detail

/// Parse a JSON export: a top-level array of record objects. Unknown fields
/// are ignored. Observations missing a mandatory field (frequency above all)
/// are dropped while the record itself is kept; records without a parseable
/// timestamp land in the rejects report.
inline ParseResult parse_json_export(const std::string& bytes) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(bytes);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error("JSON parse error at byte " + std::to_string(e.byte) + ": " + e.what());
    }
    if (doc.is_null()) return {};
    if (!doc.is_array()) throw Error("JSON export must be a top-level array of records");

    ParseResult result;
    for (size_t i = 0; i < doc.size(); ++i) {
        const auto& entry = doc[i];
        if (!entry.is_object()) {
            result.rejects.push_back({i, "entry is not an object"});
            continue;
        }
        auto ts = detail::json_string(entry, "timestamp");
        if (!ts) {
            result.rejects.push_back({i, "missing mandatory timestamp"});
            continue;
        }
        RawRecord rec;
        try {
            rec.timestamp = parse_iso8601(*ts);
        } catch (const Error& e) {
            result.rejects.push_back({i, e.what()});
            continue;
        }
        if (auto arr = entry.find("lte"); arr != entry.end() && arr->is_array()) {
            for (const auto& o : *arr) {
                if (!o.is_object()) { ++result.observations_dropped; continue; }
                auto pci = detail::json_integer(o, "pci");
                auto freq = detail::json_integer(o, "frequency_khz");
                auto rsrp = detail::json_number(o, "rsrp_dbm");
                auto rsrq = detail::json_number(o, "rsrq_db");
                if (!pci || !freq || !rsrp || !rsrq) { ++result.observations_dropped; continue; }
                LteObservation obs;
                obs.pci = static_cast<int>(*pci);
                obs.frequency_khz = *freq;
                obs.bandwidth_khz = detail::json_integer(o, "bandwidth_khz");
                if (auto band = detail::json_integer(o, "band_number")) {
                    obs.band_number = static_cast<int>(*band);
                }
                obs.rsrp_dbm = *rsrp;
                obs.rsrq_db = *rsrq;
                obs.rssi_dbm = detail::json_number(o, "rssi_dbm");
                rec.lte.push_back(std::move(obs));
            }
        }
        if (auto arr = entry.find("nr"); arr != entry.end() && arr->is_array()) {
            for (const auto& o : *arr) {
                if (!o.is_object()) { ++result.observations_dropped; continue; }
                auto pci = detail::json_integer(o, "pci");
                auto freq = detail::json_integer(o, "frequency_khz");
                auto rsrp = detail::json_number(o, "rsrp_dbm");
                auto rsrq = detail::json_number(o, "rsrq_db");
                auto sinr = detail::json_number(o, "sinr_db");
                if (!pci || !freq || !rsrp || !rsrq || !sinr) {
                    ++result.observations_dropped;
                    continue;
                }
                rec.nr.push_back({static_cast<int>(*pci), *freq, *rsrp, *rsrq, *sinr});
            }
        }
        if (auto arr = entry.find("wifi"); arr != entry.end() && arr->is_array()) {
            for (const auto& o : *arr) {
                if (!o.is_object()) { ++result.observations_dropped; continue; }
                auto bssid = detail::json_string(o, "bssid");
                auto freq = detail::json_integer(o, "frequency_mhz");
                auto rssi = detail::json_number(o, "rssi_dbm");
                if (!bssid || !freq || !rssi) { ++result.observations_dropped; continue; }
                WifiObservation obs;
                obs.bssid = *bssid;
                obs.frequency_mhz = *freq;
                obs.bandwidth_mhz = detail::json_integer(o, "bandwidth_mhz");
                obs.rssi_dbm = *rssi;
                rec.wifi.push_back(std::move(obs));
            }
        }
        if (auto g = entry.find("gps"); g != entry.end() && g->is_object()) {
            auto lon = detail::json_number(*g, "longitude_deg");
            auto lat = detail::json_number(*g, "latitude_deg");
            auto alt = detail::json_number(*g, "altitude_m");
            auto hacc = detail::json_number(*g, "horizontal_accuracy_m");
            auto vacc = detail::json_number(*g, "vertical_accuracy_m");
            if (lon && lat && alt && hacc && vacc) {
                rec.gps = GpsFix{*lon, *lat, *alt, *hacc, *vacc};
            }
        }
        if (auto sim = detail::json_string(entry, "sim")) rec.sim = parse_sim_operator(*sim);
        rec.device = detail::json_string(entry, "device");
        result.records.push_back(std::move(rec));
    }
    return result;
}

/// Remove observations that violate the validity ranges; drop the GPS fix if
/// it is implausible; return nothing when no cellular or Wi-Fi observation
/// survives. Cleaning is total: it never throws, it only counts.
inline std::optional<RawRecord> clean_record(const RawRecord& record,
                                             const ValidityRanges& ranges = {},
                                             CleaningSummary* summary = nullptr) {
    RawRecord out;
    out.timestamp = record.timestamp;
    out.sim = record.sim;
    out.device = record.device;
    out.label = record.label;
    CleaningSummary local;
    for (const auto& o : record.lte) {
        bool ok = o.frequency_khz > 0 && ranges.rsrp_ok(o.rsrp_dbm) && ranges.rsrq_ok(o.rsrq_db) &&
                  (!o.rssi_dbm || ranges.lte_rssi_ok(*o.rssi_dbm));
        if (ok) out.lte.push_back(o);
        else ++local.lte_dropped;
    }
    for (const auto& o : record.nr) {
        bool ok = o.frequency_khz > 0 && ranges.rsrp_ok(o.rsrp_dbm) && ranges.rsrq_ok(o.rsrq_db) &&
                  ranges.sinr_ok(o.sinr_db);
        if (ok) out.nr.push_back(o);
        else ++local.nr_dropped;
    }
    for (const auto& o : record.wifi) {
        bool ok = o.frequency_mhz > 0 && ranges.wifi_rssi_ok(o.rssi_dbm) && !o.bssid.empty();
        if (ok) out.wifi.push_back(o);
        else ++local.wifi_dropped;
    }
    if (record.gps) {
        if (ranges.gps_ok(*record.gps)) out.gps = record.gps;
        else ++local.gps_dropped;
    }
    std::optional<RawRecord> result;
    if (out.has_any_observation()) {
        ++local.records_kept;
        result = std::move(out);
    } else {
        ++local.records_dropped;
    }
    if (summary) summary->merge(local);
    return result;
}

/// One labels-file row: which file gets which label (optional location tag).
struct LabelAssignment {
    std::string path;
    EnvLabel label;
    std::string location_tag;
};

/// Two-column CSV `path,label` with an optional third `location` column.
inline std::vector<LabelAssignment> read_labels_file(std::istream& is) {
    auto table = csv::read_table(is, "labels file");
    if (table.header.size() < 2 || table.header[0] != "path" || table.header[1] != "label") {
        throw Error("labels file: header must start with 'path,label'");
    }
    std::map<std::string, std::string> seen;
    std::vector<LabelAssignment> out;
    for (const auto& row : table.rows) {
        LabelAssignment a;
        a.path = row[0];
        auto it = seen.find(a.path);
        if (it != seen.end()) {
            if (it->second != row[1]) {
                throw Error("conflicting labels for '" + a.path + "': " + it->second + " vs " +
                            row[1]);
            }
            continue;  // duplicate row, same label
        }
        seen.emplace(a.path, row[1]);
        a.label = parse_label(row[1]);
        if (table.header.size() > 2 && row.size() > 2) a.location_tag = row[2];
        out.push_back(std::move(a));
    }
    return out;
}

/// Minutes of data per label and session, mirroring how corpus sizes are
/// reported (record count x 5 s / 60).
struct MinutesReport {
    std::map<std::string, double> per_label_minutes;  // key: label string
    std::map<std::string, double> per_session_minutes;
    double total_minutes = 0.0;

    double label_share(const std::string& label) const {
        auto it = per_label_minutes.find(label);
        if (it == per_label_minutes.end() || total_minutes == 0.0) return 0.0;
        return it->second / total_minutes;
    }
};

inline MinutesReport minutes_report(const std::vector<RecordingSession>& sessions) {
    MinutesReport rep;
    for (const auto& s : sessions) {
        double m = s.minutes();
        rep.per_session_minutes[s.id] += m;
        if (s.label) rep.per_label_minutes[to_string(*s.label)] += m;
        rep.total_minutes += m;
    }
    return rep;
}

struct LoadResult {
    std::vector<RecordingSession> sessions;
    CleaningSummary cleaning;
    std::vector<RejectedRecord> rejects;
    size_t unordered_timestamp_warnings = 0;
};

/// Load one session per labeled JSON export file: parse, clean, label, sort.
/// Unreadable paths and conflicting labels are hard errors.
inline LoadResult load_dataset(const std::vector<LabelAssignment>& assignments,
                               const ValidityRanges& ranges = {},
                               const std::string& input_dir = {}) {
    LoadResult result;
    for (const auto& a : assignments) {
        // Session ids keep the labels-file spelling so outputs do not depend
        // on where the export corpus happens to live.
        std::string open_path = a.path;
        if (!input_dir.empty() && std::filesystem::path(a.path).is_relative()) {
            open_path = (std::filesystem::path(input_dir) / a.path).string();
        }
        std::ifstream in(open_path, std::ios::binary);
        if (!in) throw Error("cannot read input file: " + open_path);
        std::ostringstream buf;
        buf << in.rdbuf();
        ParseResult parsed = parse_json_export(buf.str());
        for (auto& r : parsed.rejects) {
            r.reason = a.path + ": " + r.reason;
            result.rejects.push_back(std::move(r));
        }
        RecordingSession session;
        session.id = a.path;
        session.location_tag = a.location_tag;
        session.label = a.label;
        for (auto& rec : parsed.records) {
            rec.label = a.label;
            if (auto cleaned = clean_record(rec, ranges, &result.cleaning)) {
                session.records.push_back(std::move(*cleaned));
            }
        }
        for (size_t i = 1; i < session.records.size(); ++i) {
            if (session.records[i].timestamp < session.records[i - 1].timestamp) {
                ++result.unordered_timestamp_warnings;
                break;
            }
        }
        std::stable_sort(session.records.begin(), session.records.end(),
                         [](const RawRecord& x, const RawRecord& y) {
                             return x.timestamp < y.timestamp;
                         });
        if (!session.records.empty()) result.sessions.push_back(std::move(session));
    }
    std::stable_sort(result.sessions.begin(), result.sessions.end(),
                     [](const RecordingSession& x, const RecordingSession& y) {
                         if (x.records.front().timestamp != y.records.front().timestamp) {
                             return x.records.front().timestamp < y.records.front().timestamp;
                         }
                         return x.id < y.id;
                     });
    return result;
}

// ---------------------------------------------------------------------------
// Tabular interchange: one CSV row per record, list-valued fields encoded as
// '|'-separated tuples with ';' between tuple fields. Exact column list in
// docs/file_formats.md.
// ---------------------------------------------------------------------------

namespace detail {

inline const std::vector<std::string>& dataset_columns() {
    static const std::vector<std::string> cols = {
        "session_id", "location_tag", "label", "timestamp", "sim", "device",
        "gps_longitude", "gps_latitude", "gps_altitude",
        "gps_horizontal_accuracy", "gps_vertical_accuracy", "lte", "nr", "wifi"};
    return cols;
}

inline std::string encode_optional_int(const std::optional<std::int64_t>& v) {
    return v ? std::to_string(*v) : std::string();
}

inline std::string encode_lte(const std::vector<LteObservation>& obs) {
    std::vector<std::string> tuples;
    tuples.reserve(obs.size());
    for (const auto& o : obs) {
        std::vector<std::string> f = {
            std::to_string(o.pci),
            std::to_string(o.frequency_khz),
            encode_optional_int(o.bandwidth_khz),
            o.band_number ? std::to_string(*o.band_number) : std::string(),
            format_double(o.rsrp_dbm),
            format_double(o.rsrq_db),
            o.rssi_dbm ? format_double(*o.rssi_dbm) : std::string()};
        tuples.push_back(join(f, ';'));
    }
    return join(tuples, '|');
}

inline std::string encode_nr(const std::vector<NrObservation>& obs) {
    std::vector<std::string> tuples;
    tuples.reserve(obs.size());
    for (const auto& o : obs) {
        std::vector<std::string> f = {std::to_string(o.pci), std::to_string(o.frequency_khz),
                                      format_double(o.rsrp_dbm), format_double(o.rsrq_db),
                                      format_double(o.sinr_db)};
        tuples.push_back(join(f, ';'));
    }
    return join(tuples, '|');
}

inline std::string encode_wifi(const std::vector<WifiObservation>& obs) {
    std::vector<std::string> tuples;
    tuples.reserve(obs.size());
    for (const auto& o : obs) {
        std::vector<std::string> f = {o.bssid, std::to_string(o.frequency_mhz),
                                      encode_optional_int(o.bandwidth_mhz),
                                      format_double(o.rssi_dbm)};
        tuples.push_back(join(f, ';'));
    }
    return join(tuples, '|');
}

}  // namespace detail

inline void write_dataset_csv(std::ostream& os, const std::vector<RecordingSession>& sessions) {
    csv::write_row(os, detail::dataset_columns());
    for (const auto& s : sessions) {
        for (const auto& r : s.records) {
            std::vector<std::string> row = {
                s.id,
                s.location_tag,
                r.label ? to_string(*r.label) : std::string(),
                format_iso8601(r.timestamp),
                to_string(r.sim),
                r.device.value_or(""),
                r.gps ? format_double(r.gps->longitude_deg) : std::string(),
                r.gps ? format_double(r.gps->latitude_deg) : std::string(),
                r.gps ? format_double(r.gps->altitude_m) : std::string(),
                r.gps ? format_double(r.gps->horizontal_accuracy_m) : std::string(),
                r.gps ? format_double(r.gps->vertical_accuracy_m) : std::string(),
                detail::encode_lte(r.lte),
                detail::encode_nr(r.nr),
                detail::encode_wifi(r.wifi)};
            csv::write_row(os, row);
        }
    }
}

inline std::vector<RecordingSession> read_dataset_csv(std::istream& is) {
    auto table = csv::read_table(is, "dataset file");
    if (table.header != detail::dataset_columns()) {
        throw Error("dataset file: unexpected column layout (see docs/file_formats.md)");
    }
    std::vector<RecordingSession> sessions;
    std::map<std::string, size_t> index;
    for (const auto& row : table.rows) {
        const std::string& sid = row[0];
        auto it = index.find(sid);
        if (it == index.end()) {
            index.emplace(sid, sessions.size());
            RecordingSession s;
            s.id = sid;
            s.location_tag = row[1];
            if (!row[2].empty()) s.label = parse_label(row[2]);
            sessions.push_back(std::move(s));
            it = index.find(sid);
        }
        RecordingSession& session = sessions[it->second];
        RawRecord rec;
        if (!row[2].empty()) rec.label = parse_label(row[2]);
        rec.timestamp = parse_iso8601(row[3]);
        rec.sim = parse_sim_operator(row[4]);
        if (!row[5].empty()) rec.device = row[5];
        if (!row[6].empty()) {
            GpsFix g;
            g.longitude_deg = parse_double(row[6]);
            g.latitude_deg = parse_double(row[7]);
            g.altitude_m = parse_double(row[8]);
            g.horizontal_accuracy_m = parse_double(row[9]);
            g.vertical_accuracy_m = parse_double(row[10]);
            rec.gps = g;
        }
        if (!row[11].empty()) {
            for (const auto& tuple : split(row[11], '|')) {
                auto f = split(tuple, ';');
                if (f.size() != 7) throw Error("dataset file: malformed lte tuple '" + tuple + "'");
                LteObservation o;
                o.pci = static_cast<int>(parse_int(f[0]));
                o.frequency_khz = parse_int(f[1]);
                if (!f[2].empty()) o.bandwidth_khz = parse_int(f[2]);
                if (!f[3].empty()) o.band_number = static_cast<int>(parse_int(f[3]));
                o.rsrp_dbm = parse_double(f[4]);
                o.rsrq_db = parse_double(f[5]);
                if (!f[6].empty()) o.rssi_dbm = parse_double(f[6]);
                rec.lte.push_back(std::move(o));
            }
        }
        if (!row[12].empty()) {
            for (const auto& tuple : split(row[12], '|')) {
                auto f = split(tuple, ';');
                if (f.size() != 5) throw Error("dataset file: malformed nr tuple '" + tuple + "'");
                rec.nr.push_back({static_cast<int>(parse_int(f[0])), parse_int(f[1]),
                                  parse_double(f[2]), parse_double(f[3]), parse_double(f[4])});
            }
        }
        if (!row[13].empty()) {
            for (const auto& tuple : split(row[13], '|')) {
                auto f = split(tuple, ';');
                if (f.size() != 4) {
                    throw Error("dataset file: malformed wifi tuple '" + tuple + "'");
                }
                WifiObservation o;
                o.bssid = f[0];
                o.frequency_mhz = parse_int(f[1]);
                if (!f[2].empty()) o.bandwidth_mhz = parse_int(f[2]);
                o.rssi_dbm = parse_double(f[3]);
                rec.wifi.push_back(std::move(o));
            }
        }
        session.records.push_back(std::move(rec));
    }
    return sessions;
}

}  // namespace envclass
