#include "envclass/windowing.hpp"

#include <gtest/gtest.h>

#include <algorithm>

#include "envclass/rng.hpp"

using namespace envclass;

namespace {

RecordingSession session_with_timestamps(const std::vector<UtcMillis>& ts) {
    RecordingSession s;
    s.id = "s";
    for (UtcMillis t : ts) {
        RawRecord r;
        r.timestamp = t;
        WifiObservation w;
        w.bssid = "b";
        w.frequency_mhz = 2437;
        w.rssi_dbm = -50.0;
        r.wifi.push_back(w);
        s.records.push_back(r);
    }
    return s;
}

std::vector<UtcMillis> regular(size_t n, UtcMillis step = 5000) {
    std::vector<UtcMillis> ts(n);
    for (size_t i = 0; i < n; ++i) ts[i] = static_cast<UtcMillis>(i) * step;
    return ts;
}

TEST(PlanWindows, SplitsRegularSessionIntoFullWindows) {
    WindowPlan plan = plan_windows(session_with_timestamps(regular(20)));
    ASSERT_EQ(plan.windows.size(), 3u);
    EXPECT_EQ(plan.windows[0].first_record, 0u);
    EXPECT_EQ(plan.windows[1].first_record, 6u);
    EXPECT_EQ(plan.windows[2].first_record, 12u);
    for (const auto& w : plan.windows) EXPECT_EQ(w.count, 6u);
    EXPECT_EQ(plan.discarded_tail_records, 2u);
    EXPECT_EQ(plan.gapped_groups, 0u);
    EXPECT_EQ(plan.total_records, 20u);
    EXPECT_EQ(plan.windowed_records(), 18u);
    // Accounting identity: every record lands in exactly one category.
    EXPECT_EQ(plan.windowed_records() + plan.discarded_gapped_records +
                  plan.discarded_tail_records,
              plan.total_records);
}

TEST(PlanWindows, DiscardsGappedGroups) {
    // Second group has a 60 s hole between its third and fourth record.
    std::vector<UtcMillis> ts = regular(12);
    for (size_t i = 9; i < 12; ++i) ts[i] += 60000;
    WindowPlan plan = plan_windows(session_with_timestamps(ts));
    ASSERT_EQ(plan.windows.size(), 1u);
    EXPECT_EQ(plan.gapped_groups, 1u);
    EXPECT_EQ(plan.discarded_gapped_records, 6u);
    EXPECT_EQ(plan.discarded_tail_records, 0u);
    EXPECT_EQ(plan.windowed_records() + plan.discarded_gapped_records +
                  plan.discarded_tail_records,
              plan.total_records);
}

TEST(PlanWindows, SpanExactlyAtLimitIsKept) {
    std::vector<UtcMillis> ts = {0, 5000, 10000, 15000, 20000, 45000};
    EXPECT_EQ(plan_windows(session_with_timestamps(ts)).windows.size(), 1u);
    ts.back() = 45001;
    EXPECT_EQ(plan_windows(session_with_timestamps(ts)).windows.size(), 0u);
}

TEST(PlanWindows, ShortSessionIsAllTail) {
    WindowPlan plan = plan_windows(session_with_timestamps(regular(5)));
    EXPECT_TRUE(plan.windows.empty());
    EXPECT_EQ(plan.discarded_tail_records, 5u);
    EXPECT_THROW(plan_windows(session_with_timestamps(regular(5)), 0), Error);
}

// ---------------------------------------------------------------------------
// Majority decision.
// ---------------------------------------------------------------------------

const std::vector<std::string> kThree = {"O", "II", "INW"};

TEST(MajorityDecision, ClearWinner) {
    EXPECT_EQ(majority_decision({0, 0, 1, 0, 2, 0}, {}, kThree), 0u);
    EXPECT_EQ(majority_decision({2, 2, 2, 2, 2, 2}, {}, kThree), 2u);
    EXPECT_EQ(majority_decision({1}, {}, kThree), 1u);
}

TEST(MajorityDecision, TieBrokenBySummedProbabilities) {
    std::vector<size_t> votes = {0, 0, 1, 1};
    std::vector<std::vector<double>> probs = {
        {0.6, 0.3, 0.1},
        {0.6, 0.3, 0.1},
        {0.1, 0.9, 0.0},
        {0.2, 0.7, 0.1},
    };
    // Sums: O = 1.5, II = 2.2. The tie is between O and II; II wins on mass.
    EXPECT_EQ(majority_decision(votes, probs, kThree), 1u);
}

TEST(MajorityDecision, ProbabilityTieFallsToConservativeRank) {
    std::vector<size_t> votes = {0, 1};
    std::vector<std::vector<double>> probs = {
        {0.5, 0.5, 0.0},
        {0.5, 0.5, 0.0},
    };
    // Equal vote counts and equal summed mass: outdoor is the safe call.
    EXPECT_EQ(majority_decision(votes, probs, kThree), 0u);

    // Without probabilities the same tie resolves by rank directly.
    EXPECT_EQ(majority_decision({0, 1}, {}, kThree), 0u);
    EXPECT_EQ(majority_decision({1, 2}, {}, kThree), 2u);  // INW beats II
    EXPECT_EQ(majority_decision({0, 1, 2}, {}, kThree), 0u);
    EXPECT_EQ(majority_decision({0, 1}, {}, {"O", "I"}), 0u);  // O beats merged indoor
}

TEST(MajorityDecision, UnknownNamesFallBackToLowestIndex) {
    EXPECT_EQ(majority_decision({0, 1}, {}, {"A", "B"}), 0u);
}

TEST(MajorityDecision, Validation) {
    EXPECT_THROW(majority_decision({}, {}, kThree), Error);
    EXPECT_THROW(majority_decision({7}, {}, kThree), Error);
    EXPECT_THROW(majority_decision({0, 1}, {{0.5, 0.5, 0.0}}, kThree), Error);
    EXPECT_THROW(majority_decision({0, 1}, {{0.5, 0.5}, {0.5, 0.5}}, kThree), Error);
}

// Independent staged resolver, written against the documented contract.
size_t oracle_decision(const std::vector<size_t>& votes,
                       const std::vector<std::vector<double>>& probs,
                       const std::vector<std::string>& names) {
    std::vector<size_t> counts(names.size(), 0);
    for (size_t v : votes) ++counts[v];
    size_t top = *std::max_element(counts.begin(), counts.end());
    std::vector<size_t> alive;
    for (size_t c = 0; c < names.size(); ++c) {
        if (counts[c] == top) alive.push_back(c);
    }
    if (alive.size() > 1 && !probs.empty()) {
        std::vector<double> mass(names.size(), 0.0);
        for (const auto& p : probs) {
            for (size_t c = 0; c < names.size(); ++c) mass[c] += p[c];
        }
        double best = mass[alive[0]];
        for (size_t c : alive) best = std::max(best, mass[c]);
        std::vector<size_t> next;
        for (size_t c : alive) {
            if (mass[c] == best) next.push_back(c);
        }
        alive = next;
    }
    if (alive.size() > 1) {
        std::vector<size_t> next;
        int best = conservative_rank(names[alive[0]]);
        for (size_t c : alive) best = std::min(best, conservative_rank(names[c]));
        for (size_t c : alive) {
            if (conservative_rank(names[c]) == best) next.push_back(c);
        }
        alive = next;
    }
    return alive.front();
}

TEST(MajorityDecision, ExhaustiveFourVotePatternsMatchOracle) {
    // All 3^4 vote patterns, without probabilities.
    for (size_t a = 0; a < 3; ++a) {
        for (size_t b = 0; b < 3; ++b) {
            for (size_t c = 0; c < 3; ++c) {
                for (size_t d = 0; d < 3; ++d) {
                    std::vector<size_t> votes = {a, b, c, d};
                    EXPECT_EQ(majority_decision(votes, {}, kThree),
                              oracle_decision(votes, {}, kThree))
                        << a << b << c << d;
                }
            }
        }
    }
}

TEST(MajorityDecision, RandomPatternsWithProbabilitiesMatchOracle) {
    Rng rng(321);
    for (int trial = 0; trial < 500; ++trial) {
        size_t n = 1 + rng.uniform_index(6);
        std::vector<size_t> votes(n);
        std::vector<std::vector<double>> probs(n);
        for (size_t i = 0; i < n; ++i) {
            votes[i] = rng.uniform_index(3);
            // Coarse grid probabilities make exact ties actually happen.
            double p0 = static_cast<double>(rng.uniform_index(5)) / 4.0;
            double p1 = (1.0 - p0) * static_cast<double>(rng.uniform_index(5)) / 4.0;
            probs[i] = {p0, p1, 1.0 - p0 - p1};
        }
        EXPECT_EQ(majority_decision(votes, probs, kThree),
                  oracle_decision(votes, probs, kThree));
        EXPECT_EQ(majority_decision(votes, {}, kThree), oracle_decision(votes, {}, kThree));
    }
}

// ---------------------------------------------------------------------------
// Window classification against a trained bundle.
// ---------------------------------------------------------------------------

RawRecord wifi_record(UtcMillis t, double rssi, int n_aps) {
    RawRecord r;
    r.timestamp = t;
    for (int i = 0; i < n_aps; ++i) {
        WifiObservation w;
        w.bssid = "ap" + std::to_string(i);
        w.frequency_mhz = 5500;
        w.rssi_dbm = rssi;
        r.wifi.push_back(w);
    }
    GpsFix g;
    g.longitude_deg = 0.0;
    g.latitude_deg = 0.0;
    g.altitude_m = 100.0;
    g.horizontal_accuracy_m = n_aps > 4 ? 30.0 : 4.0;
    g.vertical_accuracy_m = n_aps > 4 ? 30.0 : 3.0;
    r.gps = g;
    return r;
}

ModelBundle best4_bundle() {
    // Outdoor: strong GPS, few weak APs. Indoor: poor GPS, many strong APs.
    std::vector<std::vector<double>> raw;
    std::vector<size_t> y;
    Rng rng(11);
    const FeatureLayout& l = layout(LayoutId::Best4);
    for (int i = 0; i < 80; ++i) {
        bool outdoor = i % 2 == 0;
        RawRecord r = wifi_record(0, outdoor ? -80.0 + rng.uniform(-3, 3)
                                             : -45.0 + rng.uniform(-3, 3),
                                  outdoor ? 2 : 8);
        raw.push_back(extract_features(r, l));
        y.push_back(outdoor ? 0u : 1u);
    }
    ModelBundle b;
    b.layout_name = "best4";
    b.class_names = {"O", "I"};
    b.normalizer = MinMaxNormalizer::fit(raw, l);
    std::vector<std::vector<double>> x;
    for (const auto& r : raw) x.push_back(b.normalizer.apply(r));
    b.model = DecisionTree::fit(x, y, 2, {10, 2});
    return b;
}

TEST(WindowClassify, MajorityVoteAndAggregationAgreeOnCleanWindows) {
    ModelBundle b = best4_bundle();
    RecordingSession s;
    s.id = "w";
    for (int i = 0; i < 6; ++i) s.records.push_back(wifi_record(i * 5000, -80.0, 2));
    for (int i = 6; i < 12; ++i) s.records.push_back(wifi_record(i * 5000, -45.0, 8));
    WindowPlan plan = plan_windows(s);
    ASSERT_EQ(plan.windows.size(), 2u);
    EXPECT_EQ(classify_window_mv(b, s, plan.windows[0]), 0u);
    EXPECT_EQ(classify_window_da(b, s, plan.windows[0]), 0u);
    EXPECT_EQ(classify_window_mv(b, s, plan.windows[1]), 1u);
    EXPECT_EQ(classify_window_da(b, s, plan.windows[1]), 1u);
}

TEST(WindowClassify, MajorityVoteOverridesMinorityRecords) {
    ModelBundle b = best4_bundle();
    RecordingSession s;
    s.id = "w";
    // Four clearly outdoor records, two clearly indoor ones.
    for (int i = 0; i < 4; ++i) s.records.push_back(wifi_record(i * 5000, -80.0, 2));
    for (int i = 4; i < 6; ++i) s.records.push_back(wifi_record(i * 5000, -45.0, 8));
    WindowPlan plan = plan_windows(s);
    ASSERT_EQ(plan.windows.size(), 1u);
    EXPECT_EQ(classify_window_mv(b, s, plan.windows[0]), 0u);
}

TEST(WindowTechniqueNames, RoundTrip) {
    for (WindowTechnique t : {WindowTechnique::None, WindowTechnique::MajorityVote,
                              WindowTechnique::DataAggregation}) {
        EXPECT_EQ(parse_window_technique(to_string(t)), t);
    }
    EXPECT_THROW(parse_window_technique("majority"), Error);
}

}  // namespace
