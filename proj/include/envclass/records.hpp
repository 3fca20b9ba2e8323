#pragma once

#include <optional>
#include <string>
#include <vector>

#include "envclass/error.hpp"
#include "envclass/timeutil.hpp"

namespace envclass {

/// Environment classes. String forms are "O", "II", "INW", and "I" for the
/// merged indoor class used in two-class mode.
enum class EnvLabel : std::uint8_t { Outdoor, IndoorInterior, IndoorNearWindow, Indoor };

inline std::string to_string(EnvLabel l) {
    switch (l) {
        case EnvLabel::Outdoor: return "O";
        case EnvLabel::IndoorInterior: return "II";
        case EnvLabel::IndoorNearWindow: return "INW";
        case EnvLabel::Indoor: return "I";
    }
    return "?";
}

inline EnvLabel parse_label(const std::string& s) {
    if (s == "O") return EnvLabel::Outdoor;
    if (s == "II") return EnvLabel::IndoorInterior;
    if (s == "INW") return EnvLabel::IndoorNearWindow;
    if (s == "I") return EnvLabel::Indoor;
    throw Error("unknown label '" + s + "' (expected O, II, INW, or I)");
}

enum class SimOperator : std::uint8_t { Verizon, Att, TMobile, Unknown };

inline std::string to_string(SimOperator op) {
    switch (op) {
        case SimOperator::Verizon: return "Verizon";
        case SimOperator::Att: return "ATT";
        case SimOperator::TMobile: return "TMobile";
        case SimOperator::Unknown: return "Unknown";
    }
    return "Unknown";
}

/// Carrier strings map onto the three majors; anything else is Unknown.
inline SimOperator parse_sim_operator(const std::string& s) {
    if (s == "Verizon" || s == "verizon") return SimOperator::Verizon;
    if (s == "ATT" || s == "AT&T" || s == "att" || s == "at&t") return SimOperator::Att;
    if (s == "TMobile" || s == "T-Mobile" || s == "tmobile" || s == "t-mobile") {
        return SimOperator::TMobile;
    }
    return SimOperator::Unknown;
}

/// Numeric code fed to the models. Unknown gets the next code after the
/// three named carriers and is excluded from training by default upstream.
inline double sim_code(SimOperator op) { return static_cast<double>(op); }

struct LteObservation {
    int pci = 0;
    std::int64_t frequency_khz = 0;
    std::optional<std::int64_t> bandwidth_khz;
    std::optional<int> band_number;
    double rsrp_dbm = 0.0;
    double rsrq_db = 0.0;
    std::optional<double> rssi_dbm;
};

struct NrObservation {
    int pci = 0;
    std::int64_t frequency_khz = 0;
    double rsrp_dbm = 0.0;
    double rsrq_db = 0.0;
    double sinr_db = 0.0;
};

struct WifiObservation {
    std::string bssid;
    std::int64_t frequency_mhz = 0;
    std::optional<std::int64_t> bandwidth_mhz;
    double rssi_dbm = 0.0;
};

struct GpsFix {
    double longitude_deg = 0.0;
    double latitude_deg = 0.0;
    double altitude_m = 0.0;
    double horizontal_accuracy_m = 0.0;  // 68%-confidence radius, meters
    double vertical_accuracy_m = 0.0;
};

/// One 5-second measurement snapshot.
struct RawRecord {
    UtcMillis timestamp = 0;
    std::vector<LteObservation> lte;
    std::vector<NrObservation> nr;
    std::vector<WifiObservation> wifi;
    std::optional<GpsFix> gps;
    SimOperator sim = SimOperator::Unknown;
    std::optional<std::string> device;
    std::optional<EnvLabel> label;

    bool has_any_observation() const { return !lte.empty() || !nr.empty() || !wifi.empty(); }
};

/// Time-ordered records from one measurement file; all share one label.
struct RecordingSession {
    std::string id;
    std::string location_tag;
    std::optional<EnvLabel> label;
    std::vector<RawRecord> records;

    static constexpr double kSampleSeconds = 5.0;

    double minutes() const { return static_cast<double>(records.size()) * kSampleSeconds / 60.0; }
};

/// Accepted value ranges used by cleaning. These are configuration: the
/// defaults are standard reporting ranges for each metric.
struct ValidityRanges {
    double rsrp_min = -140.0, rsrp_max = -20.0;
    double rsrq_min = -34.0, rsrq_max = 3.0;
    double lte_rssi_min = -120.0, lte_rssi_max = -10.0;
    double sinr_min = -23.0, sinr_max = 40.0;
    double wifi_rssi_min = -100.0, wifi_rssi_max = 0.0;
    double gps_accuracy_min = 0.0, gps_accuracy_max = 10000.0;  // exclusive lower bound

    bool rsrp_ok(double v) const { return v >= rsrp_min && v <= rsrp_max; }
    bool rsrq_ok(double v) const { return v >= rsrq_min && v <= rsrq_max; }
    bool lte_rssi_ok(double v) const { return v >= lte_rssi_min && v <= lte_rssi_max; }
    bool sinr_ok(double v) const { return v >= sinr_min && v <= sinr_max; }
    bool wifi_rssi_ok(double v) const { return v >= wifi_rssi_min && v <= wifi_rssi_max; }
    bool gps_ok(const GpsFix& g) const {
        return g.latitude_deg >= -90.0 && g.latitude_deg <= 90.0 && g.longitude_deg >= -180.0 &&
               g.longitude_deg <= 180.0 && g.horizontal_accuracy_m > gps_accuracy_min &&
               g.horizontal_accuracy_m <= gps_accuracy_max &&
               g.vertical_accuracy_m > gps_accuracy_min &&
               g.vertical_accuracy_m <= gps_accuracy_max;
    }
};

}  // namespace envclass
