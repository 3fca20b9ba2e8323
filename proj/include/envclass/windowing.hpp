#pragma once

#include <string>
#include <vector>

#include "envclass/bundle.hpp"
#include "envclass/features.hpp"
#include "envclass/records.hpp"

namespace envclass {

/// How a group of consecutive records is turned into one decision.
enum class WindowTechnique { None, MajorityVote, DataAggregation };

inline std::string to_string(WindowTechnique t) {
    switch (t) {
        case WindowTechnique::None: return "none";
        case WindowTechnique::MajorityVote: return "mv";
        case WindowTechnique::DataAggregation: return "da";
    }
    throw Error("unknown window technique");
}

inline WindowTechnique parse_window_technique(const std::string& s) {
    if (s == "none") return WindowTechnique::None;
    if (s == "mv") return WindowTechnique::MajorityVote;
    if (s == "da") return WindowTechnique::DataAggregation;
    throw Error("unknown window technique '" + s + "' (expected none, mv, or da)");
}

/// Records are sampled every 5 s, so 6 of them span one 30 s window.
inline constexpr size_t kWindowLength = 6;
/// A full window nominally spans 25 s first-to-last; anything beyond 45 s
/// means the capture gapped and the group is discarded.
inline constexpr UtcMillis kMaxWindowSpanMs = 45000;

struct Window {
    size_t first_record = 0;  // index into the session's record vector
    size_t count = 0;
};

/// Non-overlapping grouping of one session into fixed-length windows, with
/// full accounting: every record is either inside an accepted window, inside
/// a gapped (rejected) group, or part of the incomplete tail.
struct WindowPlan {
    std::vector<Window> windows;
    size_t gapped_groups = 0;
    size_t discarded_gapped_records = 0;
    size_t discarded_tail_records = 0;
    size_t total_records = 0;

    size_t windowed_records() const {
        size_t n = 0;
        for (const auto& w : windows) n += w.count;
        return n;
    }
};

inline WindowPlan plan_windows(const RecordingSession& session,
                               size_t window_length = kWindowLength,
                               UtcMillis max_span_ms = kMaxWindowSpanMs) {
    if (window_length == 0) throw Error("window length must be positive");
    WindowPlan plan;
    plan.total_records = session.records.size();
    size_t i = 0;
    while (i + window_length <= session.records.size()) {
        UtcMillis span = session.records[i + window_length - 1].timestamp -
                         session.records[i].timestamp;
        if (span > max_span_ms) {
            ++plan.gapped_groups;
            plan.discarded_gapped_records += window_length;
        } else {
            plan.windows.push_back({i, window_length});
        }
        i += window_length;
    }
    plan.discarded_tail_records = session.records.size() - i;
    return plan;
}

/// Rank used to break exhausted ties conservatively: prefer the call that is
/// hardest to recover from if wrong. Outdoor beats near-window beats interior
/// (and outdoor beats the merged indoor class).
inline int conservative_rank(const std::string& class_name) {
    if (class_name == "O") return 0;
    if (class_name == "INW") return 1;
    if (class_name == "I") return 1;
    if (class_name == "II") return 2;
    return 3;
}

/// Combine one window's per-record votes into a single decision.
/// Stages: modal vote, then summed class probabilities among the tied
/// classes (skipped when `probs` is empty), then conservative rank, then
/// lowest class index. Returns the winning class index.
inline size_t majority_decision(const std::vector<size_t>& votes,
                                const std::vector<std::vector<double>>& probs,
                                const std::vector<std::string>& class_names) {
    if (votes.empty()) throw Error("majority decision needs at least one vote");
    const size_t k = class_names.size();
    std::vector<size_t> counts(k, 0);
    for (size_t v : votes) {
        if (v >= k) throw Error("majority decision: vote index out of range");
        ++counts[v];
    }
    size_t max_count = 0;
    for (size_t c : counts) max_count = std::max(max_count, c);
    std::vector<size_t> tied;
    for (size_t c = 0; c < k; ++c) {
        if (counts[c] == max_count) tied.push_back(c);
    }
    if (tied.size() == 1) return tied[0];

    if (!probs.empty()) {
        if (probs.size() != votes.size()) {
            throw Error("majority decision: probability rows do not match votes");
        }
        std::vector<double> summed(k, 0.0);
        for (const auto& p : probs) {
            if (p.size() != k) throw Error("majority decision: probability width mismatch");
            for (size_t c = 0; c < k; ++c) summed[c] += p[c];
        }
        double best_sum = summed[tied[0]];
        for (size_t c : tied) best_sum = std::max(best_sum, summed[c]);
        std::vector<size_t> still;
        for (size_t c : tied) {
            if (summed[c] == best_sum) still.push_back(c);
        }
        tied = std::move(still);
        if (tied.size() == 1) return tied[0];
    }

    size_t best = tied[0];
    for (size_t c : tied) {
        int rc = conservative_rank(class_names[c]);
        int rb = conservative_rank(class_names[best]);
        if (rc < rb || (rc == rb && c < best)) best = c;
    }
    return best;
}

/// Majority voting: classify each record of the window independently, then
/// merge the six votes.
inline size_t classify_window_mv(const ModelBundle& bundle, const RecordingSession& session,
                                 const Window& window, const FeatureSentinels& sentinels = {}) {
    const FeatureLayout& lay = bundle.feature_layout();
    std::vector<size_t> votes;
    std::vector<std::vector<double>> probs;
    for (size_t i = 0; i < window.count; ++i) {
        const RawRecord& r = session.records.at(window.first_record + i);
        std::vector<double> raw = extract_features(r, lay, sentinels);
        votes.push_back(bundle.predict(raw));
        probs.push_back(bundle.predict_proba(raw));
    }
    return majority_decision(votes, probs, bundle.class_names);
}

/// Data aggregation: pool all raw observations of the window into one feature
/// vector and classify once.
inline size_t classify_window_da(const ModelBundle& bundle, const RecordingSession& session,
                                 const Window& window, const FeatureSentinels& sentinels = {}) {
    const FeatureLayout& lay = bundle.feature_layout();
    std::vector<const RawRecord*> group;
    group.reserve(window.count);
    for (size_t i = 0; i < window.count; ++i) {
        group.push_back(&session.records.at(window.first_record + i));
    }
    std::vector<double> raw = extract_features(group, lay, sentinels);
    return bundle.predict(raw);
}

}  // namespace envclass
