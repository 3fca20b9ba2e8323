#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "envclass/csv.hpp"
#include "envclass/error.hpp"
#include "envclass/matrix.hpp"
#include "envclass/records.hpp"
#include "envclass/rng.hpp"
#include "envclass/util.hpp"

namespace envclass {

/// Class orderings used throughout: indices into these vectors are the label
/// encodings models are trained on.
inline const std::vector<std::string>& three_class_names() {
    static const std::vector<std::string> names = {"O", "II", "INW"};
    return names;
}

inline const std::vector<std::string>& two_class_names() {
    static const std::vector<std::string> names = {"O", "I"};
    return names;
}

inline size_t class_index(const std::string& label, const std::vector<std::string>& names) {
    for (size_t i = 0; i < names.size(); ++i) {
        if (names[i] == label) return i;
    }
    throw Error("label '" + label + "' is not one of the expected classes");
}

/// One splittable item: a record identified by its session and position,
/// carrying its label string.
struct SplitItem {
    std::string session_id;
    std::int64_t record_index = 0;
    std::string label;

    bool operator<(const SplitItem& o) const {
        if (session_id != o.session_id) return session_id < o.session_id;
        return record_index < o.record_index;
    }
    bool operator==(const SplitItem& o) const {
        return session_id == o.session_id && record_index == o.record_index;
    }
};

inline std::vector<SplitItem> items_from_matrix(const FeatureMatrix& m) {
    std::vector<SplitItem> items;
    items.reserve(m.rows.size());
    for (const auto& r : m.rows) items.push_back({r.session_id, r.record_index, r.label});
    return items;
}

inline std::vector<SplitItem> items_from_sessions(const std::vector<RecordingSession>& sessions) {
    std::vector<SplitItem> items;
    for (const auto& s : sessions) {
        std::string label = s.label ? to_string(*s.label) : std::string();
        for (size_t i = 0; i < s.records.size(); ++i) {
            items.push_back({s.id, static_cast<std::int64_t>(i), label});
        }
    }
    return items;
}

enum class SplitGranularity { Record, Session, Window };

inline std::string to_string(SplitGranularity g) {
    switch (g) {
        case SplitGranularity::Record: return "record";
        case SplitGranularity::Session: return "session";
        case SplitGranularity::Window: return "window";
    }
    throw Error("unknown split granularity");
}

inline SplitGranularity parse_split_granularity(const std::string& s) {
    if (s == "record") return SplitGranularity::Record;
    if (s == "session") return SplitGranularity::Session;
    if (s == "window") return SplitGranularity::Window;
    throw Error("unknown split granularity '" + s + "' (expected record, session, or window)");
}

struct SplitSpec {
    double test_fraction = 0.2;
    double val_fraction = 0.2;
    SplitGranularity granularity = SplitGranularity::Record;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const {
        return nlohmann::json{{"test_fraction", test_fraction},
                              {"val_fraction", val_fraction},
                              {"granularity", to_string(granularity)},
                              {"seed", seed}};
    }

    static SplitSpec from_json(const nlohmann::json& j) {
        SplitSpec s;
        s.test_fraction = j.at("test_fraction").get<double>();
        s.val_fraction = j.at("val_fraction").get<double>();
        s.granularity = parse_split_granularity(j.at("granularity").get<std::string>());
        s.seed = j.at("seed").get<std::uint64_t>();
        return s;
    }
};

struct SplitResult {
    std::vector<SplitItem> train;
    std::vector<SplitItem> val;
    std::vector<SplitItem> test;
};

namespace detail {

struct SplitUnit {
    std::string label;
    std::vector<SplitItem> items;
};

/// Groups items into indivisible units for the chosen granularity. Window
/// units are runs of `window_length` consecutive record indices within one
/// session; leftover tail records are excluded from the split entirely.
inline std::vector<SplitUnit> build_units(std::vector<SplitItem> items, SplitGranularity g,
                                          size_t window_length) {
    std::sort(items.begin(), items.end());
    for (size_t i = 1; i < items.size(); ++i) {
        if (items[i] == items[i - 1]) {
            throw Error("split: duplicate item " + items[i].session_id + "#" +
                        std::to_string(items[i].record_index));
        }
    }
    for (const auto& it : items) {
        if (it.label.empty()) {
            throw Error("split: item " + it.session_id + "#" +
                        std::to_string(it.record_index) + " has no label");
        }
    }
    std::vector<SplitUnit> units;
    if (g == SplitGranularity::Record) {
        for (auto& it : items) {
            SplitUnit u;
            u.label = it.label;
            u.items.push_back(std::move(it));
            units.push_back(std::move(u));
        }
        return units;
    }
    size_t start = 0;
    while (start < items.size()) {
        size_t end = start;
        while (end < items.size() && items[end].session_id == items[start].session_id) ++end;
        if (g == SplitGranularity::Session) {
            SplitUnit u;
            u.label = items[start].label;
            u.items.assign(items.begin() + start, items.begin() + end);
            units.push_back(std::move(u));
        } else {  // Window
            size_t n = end - start;
            size_t full = (n / window_length) * window_length;
            for (size_t off = 0; off < full; off += window_length) {
                SplitUnit u;
                u.label = items[start + off].label;
                u.items.assign(items.begin() + start + off,
                               items.begin() + start + off + window_length);
                units.push_back(std::move(u));
            }
        }
        start = end;
    }
    return units;
}

}  // namespace detail

/// Deterministic stratified split. Units (records, sessions, or windows) are
/// grouped by label, shuffled with the split seed, and dealt out as
/// round(fraction * n) test units, then validation units, then the training
/// remainder. Every class must land in every partition.
inline SplitResult stratified_split(std::vector<SplitItem> items, const SplitSpec& spec,
                                    size_t window_length = 6) {
    if (items.empty()) throw Error("split: no items");
    if (spec.test_fraction < 0.0 || spec.val_fraction < 0.0 ||
        spec.test_fraction + spec.val_fraction >= 1.0) {
        throw Error("split: fractions must be non-negative and sum below 1");
    }
    std::vector<detail::SplitUnit> units =
        detail::build_units(std::move(items), spec.granularity, window_length);
    if (units.empty()) throw Error("split: no splittable units (too little data?)");

    std::map<std::string, std::vector<size_t>> by_label;
    for (size_t i = 0; i < units.size(); ++i) by_label[units[i].label].push_back(i);

    Rng rng(spec.seed);
    SplitResult result;
    for (auto& [label, group] : by_label) {
        rng.shuffle(group);
        size_t n = group.size();
        size_t n_test = static_cast<size_t>(std::lround(spec.test_fraction * static_cast<double>(n)));
        size_t n_val = static_cast<size_t>(std::lround(spec.val_fraction * static_cast<double>(n)));
        if (n_test == 0 || n_val == 0 || n_test + n_val >= n) {
            throw Error("split: class '" + label + "' has " + std::to_string(n) + " " +
                        to_string(spec.granularity) +
                        " units, too few to appear in train, validation, and test; add data, "
                        "lower the fractions, or use a finer granularity");
        }
        for (size_t i = 0; i < n; ++i) {
            auto& dst = i < n_test ? result.test
                        : i < n_test + n_val ? result.val
                                             : result.train;
            for (const auto& item : units[group[i]].items) dst.push_back(item);
        }
    }
    std::sort(result.train.begin(), result.train.end());
    std::sort(result.val.begin(), result.val.end());
    std::sort(result.test.begin(), result.test.end());
    return result;
}

/// Collapse the two indoor classes into one: II and INW both become I.
inline std::vector<SplitItem> relabel_two_class(std::vector<SplitItem> items) {
    for (auto& it : items) {
        if (it.label == "II" || it.label == "INW") it.label = "I";
    }
    return items;
}

namespace detail {

inline std::vector<SplitItem> balance_units(std::vector<detail::SplitUnit> units,
                                            std::uint64_t seed) {
    std::map<std::string, std::vector<size_t>> by_label;
    for (size_t i = 0; i < units.size(); ++i) by_label[units[i].label].push_back(i);
    if (by_label.empty()) throw Error("balance: no items");
    size_t minority = std::numeric_limits<size_t>::max();
    for (const auto& [label, group] : by_label) minority = std::min(minority, group.size());
    if (minority == 0) throw Error("balance: a class has no items");
    Rng rng(seed);
    std::vector<SplitItem> out;
    for (auto& [label, group] : by_label) {
        rng.shuffle(group);
        for (size_t i = 0; i < minority; ++i) {
            for (const auto& item : units[group[i]].items) out.push_back(item);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace detail

/// Downsample every class to the size of the smallest one, record by record.
/// Used after the two-class relabel, where the merged indoor class would
/// otherwise dominate.
inline std::vector<SplitItem> balance_classes(std::vector<SplitItem> items, std::uint64_t seed) {
    return detail::balance_units(
        detail::build_units(std::move(items), SplitGranularity::Record, 6), seed);
}

/// Window-preserving variant: whole windows are kept or dropped so windowed
/// inference still sees intact groups. Tail records are dropped.
inline std::vector<SplitItem> balance_classes_by_window(std::vector<SplitItem> items,
                                                        std::uint64_t seed,
                                                        size_t window_length = 6) {
    return detail::balance_units(
        detail::build_units(std::move(items), SplitGranularity::Window, window_length), seed);
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

class ConfusionMatrix {
public:
    ConfusionMatrix() = default;
    explicit ConfusionMatrix(std::vector<std::string> class_names)
        : class_names_(std::move(class_names)),
          counts_(class_names_.size(), std::vector<size_t>(class_names_.size(), 0)) {}

    const std::vector<std::string>& class_names() const { return class_names_; }
    const std::vector<std::vector<size_t>>& counts() const { return counts_; }

    void add(size_t true_class, size_t predicted_class) {
        counts_.at(true_class).at(predicted_class) += 1;
    }

    size_t total() const {
        size_t n = 0;
        for (const auto& row : counts_) {
            for (size_t c : row) n += c;
        }
        return n;
    }

    double accuracy() const {
        size_t n = total();
        if (n == 0) throw Error("accuracy over zero decisions is undefined");
        size_t correct = 0;
        for (size_t k = 0; k < counts_.size(); ++k) correct += counts_[k][k];
        return static_cast<double>(correct) / static_cast<double>(n);
    }

    /// Recall per class; a class with no true instances yields no value.
    std::vector<std::optional<double>> per_class_recall() const {
        std::vector<std::optional<double>> out(class_names_.size());
        for (size_t k = 0; k < class_names_.size(); ++k) {
            size_t support = 0;
            for (size_t c : counts_[k]) support += c;
            if (support > 0) {
                out[k] = static_cast<double>(counts_[k][k]) / static_cast<double>(support);
            }
        }
        return out;
    }

    /// Of the true-outdoor decisions, the fraction called indoor-interior.
    /// This is the costly confusion worth tracking on its own. Only defined
    /// when both O and II are among the classes and O has support.
    std::optional<double> o_to_ii_rate() const {
        size_t o = class_names_.size(), ii = class_names_.size();
        for (size_t k = 0; k < class_names_.size(); ++k) {
            if (class_names_[k] == "O") o = k;
            if (class_names_[k] == "II") ii = k;
        }
        if (o == class_names_.size() || ii == class_names_.size()) return std::nullopt;
        size_t support = 0;
        for (size_t c : counts_[o]) support += c;
        if (support == 0) return std::nullopt;
        return static_cast<double>(counts_[o][ii]) / static_cast<double>(support);
    }

    nlohmann::json to_json() const {
        return nlohmann::json{{"class_names", class_names_}, {"counts", counts_}};
    }

private:
    std::vector<std::string> class_names_;
    std::vector<std::vector<size_t>> counts_;
};

/// One evaluated combination of model, feature layout, windowing technique,
/// and class scheme.
struct EvalCell {
    std::string model;        // tree | forest | dnn
    std::string feature_set;  // layout name
    std::string technique;    // none | mv | da
    std::string classes;      // 3class | 2class
    ConfusionMatrix confusion;

    std::string name() const {
        return model + "_" + feature_set + "_" + technique + "_" + classes;
    }
};

/// Writes metrics.json, metrics.csv, and one confusion_<cell>.csv per cell
/// into `dir`. Output is byte-deterministic for identical inputs.
inline void emit_report(const std::string& dir, std::vector<EvalCell> cells) {
    std::sort(cells.begin(), cells.end(),
              [](const EvalCell& a, const EvalCell& b) { return a.name() < b.name(); });
    nlohmann::json summary = nlohmann::json::object();
    std::ofstream csv_os(dir + "/metrics.csv", std::ios::binary);
    if (!csv_os) throw Error("cannot write " + dir + "/metrics.csv");
    csv::write_row(csv_os, {"model", "feature_set", "technique", "classes", "metric", "class",
                            "value"});
    for (const auto& cell : cells) {
        nlohmann::json entry{{"model", cell.model},
                             {"feature_set", cell.feature_set},
                             {"technique", cell.technique},
                             {"classes", cell.classes},
                             {"n_decisions", cell.confusion.total()},
                             {"accuracy", cell.confusion.accuracy()},
                             {"confusion", cell.confusion.to_json()}};
        auto emit_row = [&](const std::string& metric, const std::string& cls, double value) {
            csv::write_row(csv_os, {cell.model, cell.feature_set, cell.technique, cell.classes,
                                    metric, cls, format_double(value)});
        };
        emit_row("n_decisions", "", static_cast<double>(cell.confusion.total()));
        emit_row("accuracy", "", cell.confusion.accuracy());
        nlohmann::json recall = nlohmann::json::object();
        std::vector<std::optional<double>> per_class = cell.confusion.per_class_recall();
        for (size_t k = 0; k < per_class.size(); ++k) {
            const std::string& cls = cell.confusion.class_names()[k];
            if (per_class[k]) {
                recall[cls] = *per_class[k];
                emit_row("recall", cls, *per_class[k]);
            } else {
                recall[cls] = nullptr;
            }
        }
        entry["recall"] = recall;
        if (auto rate = cell.confusion.o_to_ii_rate()) {
            entry["o_to_ii_rate"] = *rate;
            emit_row("o_to_ii_rate", "", *rate);
        }
        summary[cell.name()] = std::move(entry);

        std::ofstream conf_os(dir + "/confusion_" + cell.name() + ".csv", std::ios::binary);
        if (!conf_os) throw Error("cannot write confusion matrix for " + cell.name());
        std::vector<std::string> header = {"true\\pred"};
        for (const auto& c : cell.confusion.class_names()) header.push_back(c);
        csv::write_row(conf_os, header);
        for (size_t k = 0; k < cell.confusion.class_names().size(); ++k) {
            std::vector<std::string> row = {cell.confusion.class_names()[k]};
            for (size_t c : cell.confusion.counts()[k]) row.push_back(std::to_string(c));
            csv::write_row(conf_os, row);
        }
    }
    std::ofstream json_os(dir + "/metrics.json", std::ios::binary);
    if (!json_os) throw Error("cannot write " + dir + "/metrics.json");
    json_os << summary.dump(2) << "\n";
}

}  // namespace envclass
