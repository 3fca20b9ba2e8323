#pragma once

#include <map>
#include <string>
#include <vector>

#include "envclass/bundle.hpp"
#include "envclass/features.hpp"
#include "envclass/records.hpp"

namespace envclass {

/// Which optional radios actually produced data. Wi-Fi 6 GHz support and 5G
/// NR support vary by handset, so the model has to be chosen to match.
struct FeatureAvailability {
    bool has_wifi6 = false;
    bool has_nr = false;
};

inline FeatureAvailability record_availability(const RawRecord& r) {
    FeatureAvailability a;
    a.has_nr = !r.nr.empty();
    for (const auto& o : r.wifi) {
        if (classify_wifi_band(static_cast<double>(o.frequency_mhz)) == BandGroup::Wifi6) {
            a.has_wifi6 = true;
            break;
        }
    }
    return a;
}

inline FeatureAvailability session_availability(const RecordingSession& s) {
    FeatureAvailability a;
    for (const auto& r : s.records) {
        FeatureAvailability ra = record_availability(r);
        a.has_wifi6 = a.has_wifi6 || ra.has_wifi6;
        a.has_nr = a.has_nr || ra.has_nr;
        if (a.has_wifi6 && a.has_nr) break;
    }
    return a;
}

/// Whether availability is judged per record or once per session.
enum class AvailabilityGranularity { Record, Session };

inline AvailabilityGranularity parse_availability_granularity(const std::string& s) {
    if (s == "record") return AvailabilityGranularity::Record;
    if (s == "session") return AvailabilityGranularity::Session;
    throw Error("unknown availability granularity '" + s + "' (expected record or session)");
}

/// Route a device to the widest layout its radios can fill. A device with
/// 6 GHz Wi-Fi but no NR still uses the full layout: the NR features simply
/// hold their missing-signal placeholders.
inline LayoutId route_layout(FeatureAvailability a) {
    if (!a.has_wifi6 && a.has_nr) return LayoutId::No6Ghz67;
    if (!a.has_wifi6 && !a.has_nr) return LayoutId::No6GhzNoNr40;
    return LayoutId::All72;
}

/// One trained bundle per layout, holding whichever layouts were supplied.
/// Selection fails loudly when routing lands on a missing layout.
class ModelSet {
public:
    void add(const ModelBundle* bundle) {
        if (!bundle) throw Error("model set: null bundle");
        auto [it, inserted] = by_layout_.emplace(bundle->layout_name, bundle);
        if (!inserted) {
            throw Error("model set already has a bundle for layout '" + bundle->layout_name +
                        "'");
        }
    }

    const ModelBundle& select(FeatureAvailability a) const {
        const std::string& name = layout(route_layout(a)).name;
        auto it = by_layout_.find(name);
        if (it == by_layout_.end()) {
            throw Error("model set has no bundle for layout '" + name +
                        "' required by this device's radios");
        }
        return *it->second;
    }

    const std::map<std::string, const ModelBundle*>& bundles() const { return by_layout_; }

private:
    std::map<std::string, const ModelBundle*> by_layout_;
};

/// Accuracy of one routed group of sessions, weighted by how many decisions
/// it contributed.
struct GroupAccuracy {
    std::string group;  // e.g. the layout name the group routed to
    size_t decisions = 0;
    double accuracy = 0.0;
};

/// Overall accuracy across routed groups: sum(acc_i * n_i) / sum(n_i).
inline double session_weighted_accuracy(const std::vector<GroupAccuracy>& groups) {
    size_t total = 0;
    double weighted = 0.0;
    for (const auto& g : groups) {
        total += g.decisions;
        weighted += g.accuracy * static_cast<double>(g.decisions);
    }
    if (total == 0) throw Error("weighted accuracy over zero decisions is undefined");
    return weighted / static_cast<double>(total);
}

}  // namespace envclass
