#pragma once

#include <array>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "envclass/error.hpp"
#include "envclass/records.hpp"

namespace envclass {

/// Frequency groups used to pool observations before summarizing.
enum class BandGroup { CellLow, CellMid, Wifi24, Wifi5, Wifi6, Other };

/// Cellular carriers below 1 GHz are "low band"; 1-10 GHz is "mid band".
inline BandGroup classify_cellular_band(double mhz) {
    if (mhz > 0.0 && mhz < 1000.0) return BandGroup::CellLow;
    if (mhz >= 1000.0 && mhz <= 10000.0) return BandGroup::CellMid;
    return BandGroup::Other;
}

/// Wi-Fi channels fall into the 2.4, 5, and 6 GHz bands.
inline BandGroup classify_wifi_band(double mhz) {
    if (mhz >= 2400.0 && mhz <= 2500.0) return BandGroup::Wifi24;
    if (mhz >= 5150.0 && mhz <= 5875.0) return BandGroup::Wifi5;
    if (mhz >= 5925.0 && mhz <= 7125.0) return BandGroup::Wifi6;
    return BandGroup::Other;
}

/// Min / max / mean / population standard deviation over one value pool.
struct SummaryStats {
    double min = 0.0;
    double max = 0.0;
    double avg = 0.0;
    double std = 0.0;
    size_t count = 0;
};

/// Welford-based one-pass summary. An empty pool yields the sentinel in all
/// four statistic slots and count zero.
inline SummaryStats summarize(const std::vector<double>& values, double empty_sentinel) {
    if (values.empty()) {
        return {empty_sentinel, empty_sentinel, empty_sentinel, empty_sentinel, 0};
    }
    SummaryStats s;
    s.min = values.front();
    s.max = values.front();
    double mean = 0.0;
    double m2 = 0.0;
    size_t n = 0;
    for (double x : values) {
        ++n;
        double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
        if (x < s.min) s.min = x;
        if (x > s.max) s.max = x;
    }
    s.avg = mean;
    s.std = std::sqrt(m2 / static_cast<double>(n));
    s.count = n;
    return s;
}

/// Placeholder values substituted when a radio produced no usable signal.
/// Each sits at the weak end of its metric's validity range so the absence of
/// a signal reads as "barely any signal".
struct FeatureSentinels {
    double wifi_rssi = -100.0;
    double rsrp = -140.0;
    double rsrq = -34.0;
    double sinr = -23.0;
    double lte_rssi = -120.0;
    double gps_accuracy = 10000.0;
    double gps_altitude = 0.0;
};

enum class LayoutId { All72, No6Ghz67, No6GhzNoNr40, Best4 };

/// Named, ordered feature list. Model inputs and matrix columns follow this
/// order exactly.
struct FeatureLayout {
    LayoutId id = LayoutId::All72;
    std::string name;
    std::vector<std::string> features;
    std::map<std::string, size_t> index;

    size_t size() const { return features.size(); }

    size_t index_of(const std::string& feature) const {
        auto it = index.find(feature);
        if (it == index.end()) {
            throw Error("layout '" + name + "' has no feature named '" + feature + "'");
        }
        return it->second;
    }

    bool contains(const std::string& feature) const { return index.count(feature) > 0; }
};

namespace detail {

inline const std::array<const char*, 4> kStats = {"min", "max", "avg", "std"};

inline std::vector<std::string> all72_names() {
    std::vector<std::string> names;
    names.reserve(72);
    for (const char* band : {"low", "mid"}) {
        for (const char* metric : {"rssi", "rsrp", "rsrq"}) {
            for (const char* stat : kStats) {
                names.push_back(std::string("lte_") + band + "_" + metric + "_" + stat);
            }
        }
        names.push_back(std::string("lte_") + band + "_unique_pci");
    }
    for (const char* band : {"low", "mid"}) {
        for (const char* metric : {"rsrp", "rsrq", "sinr"}) {
            for (const char* stat : kStats) {
                names.push_back(std::string("nr_") + band + "_" + metric + "_" + stat);
            }
        }
        names.push_back(std::string("nr_") + band + "_unique_pci");
    }
    names.push_back("nr_present");
    for (const char* band : {"24", "5", "6"}) {
        for (const char* stat : kStats) {
            names.push_back(std::string("wifi") + band + "_rssi_" + stat);
        }
        names.push_back(std::string("wifi") + band + "_unique_bssid");
    }
    names.push_back("gps_horizontal_accuracy");
    names.push_back("gps_vertical_accuracy");
    names.push_back("gps_altitude");
    names.push_back("sim_code");
    return names;
}

inline FeatureLayout make_layout(LayoutId id, std::string name, std::vector<std::string> features) {
    FeatureLayout layout;
    layout.id = id;
    layout.name = std::move(name);
    layout.features = std::move(features);
    for (size_t i = 0; i < layout.features.size(); ++i) {
        layout.index.emplace(layout.features[i], i);
    }
    return layout;
}

inline bool is_wifi6_feature(const std::string& f) { return f.rfind("wifi6_", 0) == 0; }
inline bool is_nr_feature(const std::string& f) { return f.rfind("nr_", 0) == 0; }

}  // namespace detail

/// The four supported layouts. `All72` covers every radio; `No6Ghz67` drops
/// the 6 GHz Wi-Fi features; `No6GhzNoNr40` additionally drops 5G NR; `Best4`
/// keeps only the four most discriminative features.
inline const FeatureLayout& layout(LayoutId id) {
    static const FeatureLayout all72 =
        detail::make_layout(LayoutId::All72, "all72", detail::all72_names());
    static const FeatureLayout no6ghz67 = [] {
        std::vector<std::string> names;
        for (const auto& f : all72.features) {
            if (!detail::is_wifi6_feature(f)) names.push_back(f);
        }
        return detail::make_layout(LayoutId::No6Ghz67, "no6ghz67", std::move(names));
    }();
    static const FeatureLayout no6ghznonr40 = [] {
        std::vector<std::string> names;
        for (const auto& f : no6ghz67.features) {
            if (!detail::is_nr_feature(f)) names.push_back(f);
        }
        return detail::make_layout(LayoutId::No6GhzNoNr40, "no6ghznonr40", std::move(names));
    }();
    static const FeatureLayout best4 = detail::make_layout(
        LayoutId::Best4, "best4",
        {"gps_vertical_accuracy", "gps_horizontal_accuracy", "wifi5_unique_bssid",
         "wifi5_rssi_max"});
    switch (id) {
        case LayoutId::All72: return all72;
        case LayoutId::No6Ghz67: return no6ghz67;
        case LayoutId::No6GhzNoNr40: return no6ghznonr40;
        case LayoutId::Best4: return best4;
    }
    throw Error("unknown layout id");
}

inline const FeatureLayout& layout_by_name(const std::string& name) {
    for (LayoutId id :
         {LayoutId::All72, LayoutId::No6Ghz67, LayoutId::No6GhzNoNr40, LayoutId::Best4}) {
        if (layout(id).name == name) return layout(id);
    }
    throw Error("unknown feature layout '" + name +
                "' (expected all72, no6ghz67, no6ghznonr40, or best4)");
}

/// Reorder/select `values` (laid out as `from`) into the order of `to`.
/// Every target feature must exist in the source layout.
inline std::vector<double> project(const std::vector<double>& values, const FeatureLayout& from,
                                   const FeatureLayout& to) {
    if (values.size() != from.size()) {
        throw Error("projection source has " + std::to_string(values.size()) +
                    " values but layout '" + from.name + "' expects " +
                    std::to_string(from.size()));
    }
    std::vector<double> out;
    out.reserve(to.size());
    for (const auto& f : to.features) {
        auto it = from.index.find(f);
        if (it == from.index.end()) {
            throw Error("cannot project: source layout '" + from.name + "' lacks feature '" + f +
                        "' required by '" + to.name + "'");
        }
        out.push_back(values[it->second]);
    }
    return out;
}

namespace detail {

/// Signal pools gathered from one or more records before summarizing.
struct FeaturePools {
    // index 0 = low band, 1 = mid band
    std::array<std::vector<double>, 2> lte_rssi, lte_rsrp, lte_rsrq;
    std::array<std::set<int>, 2> lte_pci;
    std::array<std::vector<double>, 2> nr_rsrp, nr_rsrq, nr_sinr;
    std::array<std::set<int>, 2> nr_pci;
    bool nr_present = false;
    // index 0 = 2.4 GHz, 1 = 5 GHz, 2 = 6 GHz
    std::array<std::vector<double>, 3> wifi_rssi;
    std::array<std::set<std::string>, 3> wifi_bssid;
    std::vector<double> gps_haccuracy, gps_vaccuracy, gps_altitude;
    SimOperator sim = SimOperator::Unknown;
    bool sim_taken = false;
};

inline void pool_record(FeaturePools& p, const RawRecord& r) {
    for (const auto& o : r.lte) {
        BandGroup g = classify_cellular_band(static_cast<double>(o.frequency_khz) / 1000.0);
        if (g != BandGroup::CellLow && g != BandGroup::CellMid) continue;
        size_t b = (g == BandGroup::CellLow) ? 0 : 1;
        if (o.rssi_dbm) p.lte_rssi[b].push_back(*o.rssi_dbm);
        p.lte_rsrp[b].push_back(o.rsrp_dbm);
        p.lte_rsrq[b].push_back(o.rsrq_db);
        p.lte_pci[b].insert(o.pci);
    }
    for (const auto& o : r.nr) {
        p.nr_present = true;
        BandGroup g = classify_cellular_band(static_cast<double>(o.frequency_khz) / 1000.0);
        if (g != BandGroup::CellLow && g != BandGroup::CellMid) continue;
        size_t b = (g == BandGroup::CellLow) ? 0 : 1;
        p.nr_rsrp[b].push_back(o.rsrp_dbm);
        p.nr_rsrq[b].push_back(o.rsrq_db);
        p.nr_sinr[b].push_back(o.sinr_db);
        p.nr_pci[b].insert(o.pci);
    }
    for (const auto& o : r.wifi) {
        BandGroup g = classify_wifi_band(static_cast<double>(o.frequency_mhz));
        size_t b;
        if (g == BandGroup::Wifi24) b = 0;
        else if (g == BandGroup::Wifi5) b = 1;
        else if (g == BandGroup::Wifi6) b = 2;
        else continue;
        p.wifi_rssi[b].push_back(o.rssi_dbm);
        p.wifi_bssid[b].insert(o.bssid);
    }
    if (r.gps) {
        p.gps_haccuracy.push_back(r.gps->horizontal_accuracy_m);
        p.gps_vaccuracy.push_back(r.gps->vertical_accuracy_m);
        p.gps_altitude.push_back(r.gps->altitude_m);
    }
    if (!p.sim_taken) {
        p.sim = r.sim;
        p.sim_taken = true;
    }
}

inline void append_stats(std::vector<double>& out, const SummaryStats& s) {
    out.push_back(s.min);
    out.push_back(s.max);
    out.push_back(s.avg);
    out.push_back(s.std);
}

inline double mean_or(const std::vector<double>& values, double fallback) {
    if (values.empty()) return fallback;
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

/// Builds the full feature vector in All72 order. The loops here mirror
/// all72_names(); the two must stay in lockstep.
inline std::vector<double> extract_all72(const FeaturePools& p, const FeatureSentinels& s) {
    std::vector<double> out;
    out.reserve(72);
    for (size_t b = 0; b < 2; ++b) {
        append_stats(out, summarize(p.lte_rssi[b], s.lte_rssi));
        append_stats(out, summarize(p.lte_rsrp[b], s.rsrp));
        append_stats(out, summarize(p.lte_rsrq[b], s.rsrq));
        out.push_back(static_cast<double>(p.lte_pci[b].size()));
    }
    for (size_t b = 0; b < 2; ++b) {
        append_stats(out, summarize(p.nr_rsrp[b], s.rsrp));
        append_stats(out, summarize(p.nr_rsrq[b], s.rsrq));
        append_stats(out, summarize(p.nr_sinr[b], s.sinr));
        out.push_back(static_cast<double>(p.nr_pci[b].size()));
    }
    out.push_back(p.nr_present ? 1.0 : 0.0);
    for (size_t b = 0; b < 3; ++b) {
        append_stats(out, summarize(p.wifi_rssi[b], s.wifi_rssi));
        out.push_back(static_cast<double>(p.wifi_bssid[b].size()));
    }
    out.push_back(mean_or(p.gps_haccuracy, s.gps_accuracy));
    out.push_back(mean_or(p.gps_vaccuracy, s.gps_accuracy));
    out.push_back(mean_or(p.gps_altitude, s.gps_altitude));
    out.push_back(sim_code(p.sim));
    return out;
}

}  // namespace detail

/// Extract features from a group of records pooled together (the group is a
/// single record for per-record classification, or a whole window when
/// aggregating).
inline std::vector<double> extract_features(const std::vector<const RawRecord*>& records,
                                            const FeatureLayout& target,
                                            const FeatureSentinels& sentinels = {}) {
    if (records.empty()) throw Error("cannot extract features from an empty record group");
    detail::FeaturePools pools;
    for (const RawRecord* r : records) detail::pool_record(pools, *r);
    std::vector<double> all = detail::extract_all72(pools, sentinels);
    const FeatureLayout& all72 = layout(LayoutId::All72);
    if (target.id == LayoutId::All72) return all;
    return project(all, all72, target);
}

inline std::vector<double> extract_features(const RawRecord& record, const FeatureLayout& target,
                                            const FeatureSentinels& sentinels = {}) {
    return extract_features(std::vector<const RawRecord*>{&record}, target, sentinels);
}

// ---------------------------------------------------------------------------
// Min-max normalization, fitted per feature column.
// ---------------------------------------------------------------------------

/// Per-column affine map onto [0,1]. Values outside the fitted range clamp to
/// the boundary; a constant column maps to 0.
struct MinMaxNormalizer {
    std::vector<std::string> feature_names;
    std::vector<double> col_min;
    std::vector<double> col_max;

    size_t size() const { return feature_names.size(); }

    static MinMaxNormalizer fit(const std::vector<std::vector<double>>& rows,
                                const FeatureLayout& layout) {
        if (rows.empty()) throw Error("cannot fit a normalizer on zero rows");
        for (const auto& row : rows) {
            if (row.size() != layout.size()) {
                throw Error("normalizer fit: row width " + std::to_string(row.size()) +
                            " does not match layout '" + layout.name + "'");
            }
        }
        MinMaxNormalizer n;
        n.feature_names = layout.features;
        n.col_min = rows[0];
        n.col_max = rows[0];
        for (const auto& row : rows) {
            for (size_t j = 0; j < row.size(); ++j) {
                if (row[j] < n.col_min[j]) n.col_min[j] = row[j];
                if (row[j] > n.col_max[j]) n.col_max[j] = row[j];
            }
        }
        return n;
    }

    std::vector<double> apply(const std::vector<double>& row) const {
        if (row.size() != size()) {
            throw Error("normalizer apply: expected " + std::to_string(size()) +
                        " features, got " + std::to_string(row.size()));
        }
        std::vector<double> out(row.size());
        for (size_t j = 0; j < row.size(); ++j) {
            double span = col_max[j] - col_min[j];
            if (span == 0.0) {
                out[j] = 0.0;
                continue;
            }
            double v = (row[j] - col_min[j]) / span;
            out[j] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        }
        return out;
    }

    nlohmann::json to_json() const {
        return nlohmann::json{
            {"feature_names", feature_names}, {"min", col_min}, {"max", col_max}};
    }

    static MinMaxNormalizer from_json(const nlohmann::json& j) {
        MinMaxNormalizer n;
        n.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        n.col_min = j.at("min").get<std::vector<double>>();
        n.col_max = j.at("max").get<std::vector<double>>();
        if (n.col_min.size() != n.feature_names.size() ||
            n.col_max.size() != n.feature_names.size()) {
            throw Error("normalizer JSON: min/max length does not match feature_names");
        }
        return n;
    }
};

}  // namespace envclass
