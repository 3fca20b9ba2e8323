#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "envclass/csv.hpp"
#include "envclass/features.hpp"
#include "envclass/records.hpp"
#include "envclass/rng.hpp"
#include "envclass/timeutil.hpp"
#include "envclass/util.hpp"

namespace envclass {

/// Gaussian signal level: mean plus spread.
struct SignalProfile {
    double mean = 0.0;
    double sd = 1.0;
};

/// Observation counts follow a mixed Poisson: each record draws a local rate
/// from normal(lambda, dispersion) clamped at zero, then a Poisson count.
struct CountProfile {
    double lambda = 1.0;
    double dispersion = 1.0;
};

/// Signal statistics characterizing one environment class.
struct EnvProfile {
    EnvLabel label = EnvLabel::Outdoor;

    SignalProfile wifi24_rssi, wifi5_rssi, wifi6_rssi;
    CountProfile wifi24_count, wifi5_count, wifi6_count;
    SignalProfile lte_rsrp, lte_rsrq, lte_rssi;
    CountProfile lte_count;
    SignalProfile nr_rsrp, nr_rsrq, nr_sinr;
    CountProfile nr_count;
    SignalProfile gps_horizontal, gps_vertical, gps_altitude;

    double nr_session_prob = 0.9;     // chance a session's device reports 5G NR
    double wifi6_session_prob = 0.8;  // chance a session sees any 6 GHz AP
    double gps_fix_prob = 0.95;       // chance each record carries a GPS fix
};

/// Open sky: weak, sparse Wi-Fi; strong cellular; tight GPS.
inline EnvProfile outdoor_profile() {
    EnvProfile p;
    p.label = EnvLabel::Outdoor;
    p.wifi24_rssi = {-75.0, 4.0};
    p.wifi5_rssi = {-80.0, 4.0};
    p.wifi6_rssi = {-80.0, 4.0};
    p.wifi24_count = {3.0, 1.0};
    p.wifi5_count = {2.0, 1.0};
    p.wifi6_count = {1.0, 0.5};
    p.lte_rsrp = {-82.0, 5.0};
    p.lte_rsrq = {-7.0, 1.5};
    p.lte_rssi = {-55.0, 4.0};
    p.lte_count = {4.0, 1.0};
    p.nr_rsrp = {-80.0, 5.0};
    p.nr_rsrq = {-7.0, 1.5};
    p.nr_sinr = {18.0, 4.0};
    p.nr_count = {2.0, 1.0};
    p.gps_horizontal = {10.0, 3.0};
    p.gps_vertical = {3.0, 1.0};
    p.gps_altitude = {225.0, 8.0};
    return p;
}

/// Deep indoors: dense, strong Wi-Fi; attenuated cellular; the fused location
/// provider leans on Wi-Fi positioning (small horizontal figure) while the
/// vertical estimate degrades badly.
inline EnvProfile indoor_interior_profile() {
    EnvProfile p;
    p.label = EnvLabel::IndoorInterior;
    p.wifi24_rssi = {-48.0, 4.0};
    p.wifi5_rssi = {-50.0, 4.0};
    p.wifi6_rssi = {-52.0, 4.0};
    p.wifi24_count = {12.0, 2.0};
    p.wifi5_count = {10.0, 2.0};
    p.wifi6_count = {6.0, 1.5};
    p.lte_rsrp = {-104.0, 5.0};
    p.lte_rsrq = {-13.0, 1.5};
    p.lte_rssi = {-75.0, 4.0};
    p.lte_count = {4.0, 1.0};
    p.nr_rsrp = {-102.0, 5.0};
    p.nr_rsrq = {-13.0, 1.5};
    p.nr_sinr = {2.0, 4.0};
    p.nr_count = {2.0, 1.0};
    p.gps_horizontal = {4.0, 1.0};
    p.gps_vertical = {25.0, 6.0};
    p.gps_altitude = {225.0, 8.0};
    return p;
}

namespace detail {

inline SignalProfile blend(const SignalProfile& a, const SignalProfile& b, double t,
                           double extra_sd) {
    return {a.mean + (b.mean - a.mean) * t, (a.sd + b.sd) * 0.5 * extra_sd};
}

inline CountProfile blend(const CountProfile& a, const CountProfile& b, double t) {
    return {a.lambda + (b.lambda - a.lambda) * t, (a.dispersion + b.dispersion) * 0.5};
}

}  // namespace detail

/// By a window: halfway between the interior and outdoor regimes, with extra
/// spread because the environment is genuinely mixed.
inline EnvProfile indoor_near_window_profile() {
    const EnvProfile ii = indoor_interior_profile();
    const EnvProfile o = outdoor_profile();
    constexpr double t = 0.5;
    constexpr double extra = 1.25;
    EnvProfile p;
    p.label = EnvLabel::IndoorNearWindow;
    p.wifi24_rssi = detail::blend(ii.wifi24_rssi, o.wifi24_rssi, t, extra);
    p.wifi5_rssi = detail::blend(ii.wifi5_rssi, o.wifi5_rssi, t, extra);
    p.wifi6_rssi = detail::blend(ii.wifi6_rssi, o.wifi6_rssi, t, extra);
    p.wifi24_count = detail::blend(ii.wifi24_count, o.wifi24_count, t);
    p.wifi5_count = detail::blend(ii.wifi5_count, o.wifi5_count, t);
    p.wifi6_count = detail::blend(ii.wifi6_count, o.wifi6_count, t);
    p.lte_rsrp = detail::blend(ii.lte_rsrp, o.lte_rsrp, t, extra);
    p.lte_rsrq = detail::blend(ii.lte_rsrq, o.lte_rsrq, t, extra);
    p.lte_rssi = detail::blend(ii.lte_rssi, o.lte_rssi, t, extra);
    p.lte_count = detail::blend(ii.lte_count, o.lte_count, t);
    p.nr_rsrp = detail::blend(ii.nr_rsrp, o.nr_rsrp, t, extra);
    p.nr_rsrq = detail::blend(ii.nr_rsrq, o.nr_rsrq, t, extra);
    p.nr_sinr = detail::blend(ii.nr_sinr, o.nr_sinr, t, extra);
    p.nr_count = detail::blend(ii.nr_count, o.nr_count, t);
    p.gps_horizontal = detail::blend(ii.gps_horizontal, o.gps_horizontal, t, extra);
    p.gps_vertical = detail::blend(ii.gps_vertical, o.gps_vertical, t, extra);
    p.gps_altitude = detail::blend(ii.gps_altitude, o.gps_altitude, t, 1.0);
    return p;
}

struct SynthConfig {
    size_t sessions_per_label = 6;
    size_t records_per_session = 60;
    std::uint64_t seed = 0;
    std::vector<EnvProfile> profiles = {outdoor_profile(), indoor_interior_profile(),
                                        indoor_near_window_profile()};
};

namespace detail {

inline double number_at(const nlohmann::json& j, const std::string& context,
                        const std::string& key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number()) {
        throw Error("profile override '" + context + "." + key + "' must be a number");
    }
    return j.at(key).get<double>();
}

inline void reject_unknown_keys(const nlohmann::json& j, const std::string& context,
                                const std::vector<std::string>& known) {
    for (const auto& [key, value] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw Error("unknown profile override key '" + context + "." + key + "'");
        }
    }
}

inline SignalProfile merged_signal(const nlohmann::json& j, const std::string& context,
                                   SignalProfile base) {
    if (!j.is_object()) throw Error("profile override '" + context + "' must be an object");
    reject_unknown_keys(j, context, {"mean", "sd"});
    base.mean = number_at(j, context, "mean", base.mean);
    base.sd = number_at(j, context, "sd", base.sd);
    return base;
}

inline CountProfile merged_count(const nlohmann::json& j, const std::string& context,
                                 CountProfile base) {
    if (!j.is_object()) throw Error("profile override '" + context + "' must be an object");
    reject_unknown_keys(j, context, {"lambda", "dispersion"});
    base.lambda = number_at(j, context, "lambda", base.lambda);
    base.dispersion = number_at(j, context, "dispersion", base.dispersion);
    return base;
}

}  // namespace detail

/// Apply a partial override object to one environment profile. Any subset of
/// parameters may be given; unmentioned fields keep the base values. Unknown
/// keys are rejected so config typos fail loudly.
inline EnvProfile merged_profile(const nlohmann::json& j, EnvProfile base) {
    const std::string context = to_string(base.label);
    if (!j.is_object()) throw Error("profile override '" + context + "' must be an object");

    struct SignalField {
        const char* key;
        SignalProfile EnvProfile::* member;
    };
    struct CountField {
        const char* key;
        CountProfile EnvProfile::* member;
    };
    static const SignalField signals[] = {
        {"wifi24_rssi", &EnvProfile::wifi24_rssi}, {"wifi5_rssi", &EnvProfile::wifi5_rssi},
        {"wifi6_rssi", &EnvProfile::wifi6_rssi},   {"lte_rsrp", &EnvProfile::lte_rsrp},
        {"lte_rsrq", &EnvProfile::lte_rsrq},       {"lte_rssi", &EnvProfile::lte_rssi},
        {"nr_rsrp", &EnvProfile::nr_rsrp},         {"nr_rsrq", &EnvProfile::nr_rsrq},
        {"nr_sinr", &EnvProfile::nr_sinr},         {"gps_horizontal", &EnvProfile::gps_horizontal},
        {"gps_vertical", &EnvProfile::gps_vertical}, {"gps_altitude", &EnvProfile::gps_altitude},
    };
    static const CountField counts[] = {
        {"wifi24_count", &EnvProfile::wifi24_count},
        {"wifi5_count", &EnvProfile::wifi5_count},
        {"wifi6_count", &EnvProfile::wifi6_count},
        {"lte_count", &EnvProfile::lte_count},
        {"nr_count", &EnvProfile::nr_count},
    };

    std::vector<std::string> known = {"nr_session_prob", "wifi6_session_prob", "gps_fix_prob"};
    for (const auto& f : signals) known.push_back(f.key);
    for (const auto& f : counts) known.push_back(f.key);
    detail::reject_unknown_keys(j, context, known);

    for (const auto& f : signals) {
        if (j.contains(f.key)) {
            base.*f.member =
                detail::merged_signal(j.at(f.key), context + "." + f.key, base.*f.member);
        }
    }
    for (const auto& f : counts) {
        if (j.contains(f.key)) {
            base.*f.member =
                detail::merged_count(j.at(f.key), context + "." + f.key, base.*f.member);
        }
    }
    base.nr_session_prob = detail::number_at(j, context, "nr_session_prob", base.nr_session_prob);
    base.wifi6_session_prob =
        detail::number_at(j, context, "wifi6_session_prob", base.wifi6_session_prob);
    base.gps_fix_prob = detail::number_at(j, context, "gps_fix_prob", base.gps_fix_prob);
    return base;
}

/// Apply a config-file override set, keyed by class label ("O", "II", "INW").
inline void apply_profile_overrides(std::vector<EnvProfile>& profiles,
                                    const nlohmann::json& overrides) {
    if (!overrides.is_object()) throw Error("'profiles' override must be a JSON object");
    for (const auto& [label, obj] : overrides.items()) {
        bool matched = false;
        for (auto& p : profiles) {
            if (to_string(p.label) == label) {
                p = merged_profile(obj, p);
                matched = true;
            }
        }
        if (!matched) {
            throw Error("profile override targets unknown class '" + label +
                        "' (expected O, II, or INW)");
        }
    }
}

/// Swap the horizontal-accuracy distributions of the outdoor and
/// indoor-interior profiles. The defaults follow the observed trend of fused
/// location providers (Wi-Fi positioning makes the horizontal figure smaller
/// indoors); this switch restores the classic satellite-only expectation.
/// The near-window profile stays as is: it is intermediate either way.
inline void invert_horizontal_accuracy(std::vector<EnvProfile>& profiles) {
    EnvProfile* outdoor = nullptr;
    EnvProfile* interior = nullptr;
    for (auto& p : profiles) {
        if (p.label == EnvLabel::Outdoor) outdoor = &p;
        if (p.label == EnvLabel::IndoorInterior) interior = &p;
    }
    if (!outdoor || !interior) {
        throw Error("horizontal-accuracy inversion needs both the O and II profiles");
    }
    std::swap(outdoor->gps_horizontal, interior->gps_horizontal);
}

namespace detail {

struct SynthAp {
    std::string bssid;
    std::int64_t frequency_mhz = 0;
    double offset = 0.0;  // per-session level shift
};

struct SynthCell {
    int pci = 0;
    std::int64_t frequency_khz = 0;
    int band_number = 0;
    double offset = 0.0;
};

inline double clamped(double v, double lo, double hi) { return std::clamp(v, lo, hi); }

inline size_t mixed_poisson(Rng& rng, const CountProfile& c) {
    double rate = std::max(0.0, rng.normal(c.lambda, c.dispersion));
    return rng.poisson(rate);
}

inline std::vector<SynthAp> build_ap_pool(Rng& rng, const std::string& prefix,
                                          const std::string& session_tag, double lambda,
                                          const std::vector<std::int64_t>& freqs) {
    size_t size = static_cast<size_t>(std::lround(std::max(1.0, lambda * 2.0)));
    std::vector<SynthAp> pool;
    pool.reserve(size);
    for (size_t i = 0; i < size; ++i) {
        SynthAp ap;
        ap.bssid = prefix + "-" + session_tag + "-" + std::to_string(i);
        ap.frequency_mhz = freqs[rng.uniform_index(freqs.size())];
        ap.offset = rng.normal(0.0, 3.0);
        pool.push_back(std::move(ap));
    }
    return pool;
}

}  // namespace detail

/// Generate one session of `records` synthetic records for `profile`. All
/// randomness comes from `seed`, so a session is reproducible in isolation.
inline RecordingSession generate_session(const EnvProfile& profile, size_t records,
                                         const std::string& session_id, UtcMillis start_time,
                                         std::uint64_t seed) {
    Rng rng(seed);
    RecordingSession session;
    session.id = session_id;
    session.location_tag = "SYN";
    session.label = profile.label;

    const bool has_nr = rng.uniform01() < profile.nr_session_prob;
    const bool has_wifi6 = rng.uniform01() < profile.wifi6_session_prob;
    const SimOperator sim = static_cast<SimOperator>(rng.uniform_index(3));

    // Session-stable radio environment: AP and cell identities persist across
    // records so uniqueness counts behave like the real world.
    std::vector<detail::SynthAp> pool24 = detail::build_ap_pool(
        rng, "ap24", session_id, profile.wifi24_count.lambda, {2412, 2437, 2462});
    std::vector<detail::SynthAp> pool5 = detail::build_ap_pool(
        rng, "ap5", session_id, profile.wifi5_count.lambda, {5180, 5220, 5500, 5745, 5825});
    std::vector<detail::SynthAp> pool6 =
        has_wifi6 ? detail::build_ap_pool(rng, "ap6", session_id, profile.wifi6_count.lambda,
                                          {5975, 6055, 6135, 6535, 6855, 7115})
                  : std::vector<detail::SynthAp>{};

    auto build_cells = [&](double lambda, bool nr) {
        size_t size = static_cast<size_t>(std::lround(std::max(1.0, lambda * 1.5)));
        std::vector<detail::SynthCell> cells;
        for (size_t i = 0; i < size; ++i) {
            detail::SynthCell c;
            bool low = rng.uniform01() < (nr ? 0.3 : 0.4);
            if (nr) {
                c.pci = static_cast<int>(rng.uniform_index(1008));
                c.frequency_khz = low ? 629000 : 3550000;
                c.band_number = low ? 71 : 78;
            } else {
                c.pci = static_cast<int>(rng.uniform_index(504));
                c.frequency_khz = low ? (rng.uniform01() < 0.5 ? 738000 : 867500)
                                      : (rng.uniform01() < 0.5 ? 1957500 : 2655000);
                c.band_number = low ? 13 : 4;
            }
            cells.push_back(c);
        }
        return cells;
    };
    std::vector<detail::SynthCell> lte_cells = build_cells(profile.lte_count.lambda, false);
    std::vector<detail::SynthCell> nr_cells =
        has_nr ? build_cells(profile.nr_count.lambda, true) : std::vector<detail::SynthCell>{};

    const double lon0 = rng.uniform(-88.3, -88.2);
    const double lat0 = rng.uniform(40.0, 40.2);

    for (size_t i = 0; i < records; ++i) {
        RawRecord rec;
        rec.timestamp = start_time + static_cast<UtcMillis>(i) * 5000;
        rec.sim = sim;
        rec.device = "synthetic";
        rec.label = profile.label;

        size_t n_lte = std::min(detail::mixed_poisson(rng, profile.lte_count), lte_cells.size());
        for (size_t idx : rng.sample_without_replacement(lte_cells.size(), n_lte)) {
            const auto& cell = lte_cells[idx];
            LteObservation o;
            o.pci = cell.pci;
            o.frequency_khz = cell.frequency_khz;
            o.bandwidth_khz = 20000;
            o.band_number = cell.band_number;
            o.rsrp_dbm = detail::clamped(
                rng.normal(profile.lte_rsrp.mean + cell.offset, profile.lte_rsrp.sd), -140.0,
                -20.0);
            o.rsrq_db =
                detail::clamped(rng.normal(profile.lte_rsrq.mean, profile.lte_rsrq.sd), -34.0, 3.0);
            o.rssi_dbm = detail::clamped(
                rng.normal(profile.lte_rssi.mean + cell.offset, profile.lte_rssi.sd), -120.0,
                -10.0);
            rec.lte.push_back(std::move(o));
        }
        if (!nr_cells.empty()) {
            size_t n_nr = std::min(detail::mixed_poisson(rng, profile.nr_count), nr_cells.size());
            for (size_t idx : rng.sample_without_replacement(nr_cells.size(), n_nr)) {
                const auto& cell = nr_cells[idx];
                NrObservation o;
                o.pci = cell.pci;
                o.frequency_khz = cell.frequency_khz;
                o.rsrp_dbm = detail::clamped(
                    rng.normal(profile.nr_rsrp.mean + cell.offset, profile.nr_rsrp.sd), -140.0,
                    -20.0);
                o.rsrq_db = detail::clamped(rng.normal(profile.nr_rsrq.mean, profile.nr_rsrq.sd),
                                            -34.0, 3.0);
                o.sinr_db = detail::clamped(rng.normal(profile.nr_sinr.mean, profile.nr_sinr.sd),
                                            -23.0, 40.0);
                rec.nr.push_back(std::move(o));
            }
        }
        auto observe_wifi = [&](const std::vector<detail::SynthAp>& pool,
                                const CountProfile& count, const SignalProfile& rssi) {
            if (pool.empty()) return;
            size_t n = std::min(detail::mixed_poisson(rng, count), pool.size());
            for (size_t idx : rng.sample_without_replacement(pool.size(), n)) {
                const auto& ap = pool[idx];
                WifiObservation o;
                o.bssid = ap.bssid;
                o.frequency_mhz = ap.frequency_mhz;
                o.bandwidth_mhz = 80;
                o.rssi_dbm =
                    detail::clamped(rng.normal(rssi.mean + ap.offset, rssi.sd), -100.0, 0.0);
                rec.wifi.push_back(std::move(o));
            }
        };
        observe_wifi(pool24, profile.wifi24_count, profile.wifi24_rssi);
        observe_wifi(pool5, profile.wifi5_count, profile.wifi5_rssi);
        observe_wifi(pool6, profile.wifi6_count, profile.wifi6_rssi);

        if (rec.lte.empty() && rec.nr.empty() && rec.wifi.empty()) {
            // Real captures always see something; guarantee one beacon so the
            // record survives cleaning.
            const auto& ap = pool24.front();
            WifiObservation o;
            o.bssid = ap.bssid;
            o.frequency_mhz = ap.frequency_mhz;
            o.bandwidth_mhz = 80;
            o.rssi_dbm = detail::clamped(
                rng.normal(profile.wifi24_rssi.mean + ap.offset, profile.wifi24_rssi.sd), -100.0,
                0.0);
            rec.wifi.push_back(std::move(o));
        }

        if (rng.uniform01() < profile.gps_fix_prob) {
            GpsFix g;
            g.longitude_deg = lon0 + rng.normal(0.0, 1e-4);
            g.latitude_deg = lat0 + rng.normal(0.0, 1e-4);
            g.altitude_m = rng.normal(profile.gps_altitude.mean, profile.gps_altitude.sd);
            g.horizontal_accuracy_m = detail::clamped(
                rng.normal(profile.gps_horizontal.mean, profile.gps_horizontal.sd), 0.5, 10000.0);
            g.vertical_accuracy_m = detail::clamped(
                rng.normal(profile.gps_vertical.mean, profile.gps_vertical.sd), 0.3, 10000.0);
            rec.gps = g;
        }
        session.records.push_back(std::move(rec));
    }
    return session;
}

/// Generate the full labeled corpus: `sessions_per_label` sessions for each
/// profile, one hour apart, each reproducible from the master seed alone.
inline std::vector<RecordingSession> generate_dataset(const SynthConfig& config) {
    if (config.profiles.empty()) throw Error("synthetic generation needs at least one profile");
    if (config.records_per_session == 0 || config.sessions_per_label == 0) {
        throw Error("synthetic generation needs positive session and record counts");
    }
    const UtcMillis base = parse_iso8601("2024-06-01T00:00:00Z");
    std::vector<RecordingSession> sessions;
    size_t counter = 0;
    for (const auto& profile : config.profiles) {
        for (size_t s = 0; s < config.sessions_per_label; ++s, ++counter) {
            std::string id = to_string(profile.label) + "_" + std::to_string(s);
            UtcMillis start = base + static_cast<UtcMillis>(counter) * 3600000;
            sessions.push_back(generate_session(profile, config.records_per_session, id, start,
                                                derive_seed(config.seed, counter)));
        }
    }
    return sessions;
}

/// Empirical CDF table for selected features, long format:
/// feature,label,value,cdf. Meant for eyeballing class separation.
inline void emit_cdf_report(std::ostream& os, const std::vector<RecordingSession>& sessions,
                            const std::vector<std::string>& features) {
    const FeatureLayout& all = layout(LayoutId::All72);
    std::vector<size_t> feature_idx;
    for (const auto& f : features) feature_idx.push_back(all.index_of(f));

    std::map<std::string, std::vector<std::vector<double>>> rows_by_label;
    for (const auto& s : sessions) {
        for (const auto& r : s.records) {
            std::string label = r.label ? to_string(*r.label)
                                        : (s.label ? to_string(*s.label) : std::string("?"));
            rows_by_label[label].push_back(extract_features(r, all));
        }
    }
    csv::write_row(os, {"feature", "label", "value", "cdf"});
    for (size_t fi = 0; fi < features.size(); ++fi) {
        for (const auto& [label, rows] : rows_by_label) {
            std::vector<double> values;
            values.reserve(rows.size());
            for (const auto& row : rows) values.push_back(row[feature_idx[fi]]);
            std::sort(values.begin(), values.end());
            for (size_t i = 0; i < values.size(); ++i) {
                double cdf = static_cast<double>(i + 1) / static_cast<double>(values.size());
                csv::write_row(os, {features[fi], label, format_double(values[i]),
                                    format_double(cdf)});
            }
        }
    }
}

}  // namespace envclass
