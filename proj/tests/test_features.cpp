#include "envclass/features.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "envclass/rng.hpp"

using namespace envclass;

namespace {

// Independent reference: plain two-pass mean / population variance.
struct TwoPassStats {
    double min, max, avg, std;
};

TwoPassStats two_pass(const std::vector<double>& v) {
    TwoPassStats s{};
    s.min = *std::min_element(v.begin(), v.end());
    s.max = *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    for (double x : v) sum += x;
    s.avg = sum / static_cast<double>(v.size());
    double sq = 0.0;
    for (double x : v) sq += (x - s.avg) * (x - s.avg);
    s.std = std::sqrt(sq / static_cast<double>(v.size()));
    return s;
}

double rel_err(double a, double b) {
    double denom = std::max({std::fabs(a), std::fabs(b), 1e-12});
    return std::fabs(a - b) / denom;
}

TEST(Summarize, MatchesTwoPassReference) {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        size_t n = 1 + rng.uniform_index(40);
        std::vector<double> v(n);
        for (auto& x : v) x = rng.uniform(-140.0, 40.0);
        SummaryStats got = summarize(v, -999.0);
        TwoPassStats want = two_pass(v);
        EXPECT_EQ(got.count, n);
        EXPECT_DOUBLE_EQ(got.min, want.min);
        EXPECT_DOUBLE_EQ(got.max, want.max);
        EXPECT_LT(rel_err(got.avg, want.avg), 1e-12);
        EXPECT_LT(rel_err(got.std, want.std), 1e-9);
    }
}

TEST(Summarize, EmptyPoolUsesSentinelEverywhere) {
    SummaryStats s = summarize({}, -140.0);
    EXPECT_EQ(s.count, 0u);
    EXPECT_DOUBLE_EQ(s.min, -140.0);
    EXPECT_DOUBLE_EQ(s.max, -140.0);
    EXPECT_DOUBLE_EQ(s.avg, -140.0);
    EXPECT_DOUBLE_EQ(s.std, -140.0);
}

TEST(Summarize, SingleValueHasZeroStd) {
    SummaryStats s = summarize({-70.5}, 0.0);
    EXPECT_DOUBLE_EQ(s.min, -70.5);
    EXPECT_DOUBLE_EQ(s.max, -70.5);
    EXPECT_DOUBLE_EQ(s.avg, -70.5);
    EXPECT_DOUBLE_EQ(s.std, 0.0);
}

TEST(Bands, CellularBoundaries) {
    EXPECT_EQ(classify_cellular_band(0.0), BandGroup::Other);
    EXPECT_EQ(classify_cellular_band(-5.0), BandGroup::Other);
    EXPECT_EQ(classify_cellular_band(700.0), BandGroup::CellLow);
    EXPECT_EQ(classify_cellular_band(999.999), BandGroup::CellLow);
    EXPECT_EQ(classify_cellular_band(1000.0), BandGroup::CellMid);
    EXPECT_EQ(classify_cellular_band(3550.0), BandGroup::CellMid);
    EXPECT_EQ(classify_cellular_band(10000.0), BandGroup::CellMid);
    EXPECT_EQ(classify_cellular_band(10000.001), BandGroup::Other);
    EXPECT_EQ(classify_cellular_band(28000.0), BandGroup::Other);  // mmWave
}

TEST(Bands, WifiBoundaries) {
    EXPECT_EQ(classify_wifi_band(2399.0), BandGroup::Other);
    EXPECT_EQ(classify_wifi_band(2400.0), BandGroup::Wifi24);
    EXPECT_EQ(classify_wifi_band(2500.0), BandGroup::Wifi24);
    EXPECT_EQ(classify_wifi_band(2501.0), BandGroup::Other);
    EXPECT_EQ(classify_wifi_band(5150.0), BandGroup::Wifi5);
    EXPECT_EQ(classify_wifi_band(5875.0), BandGroup::Wifi5);
    EXPECT_EQ(classify_wifi_band(5900.0), BandGroup::Other);
    EXPECT_EQ(classify_wifi_band(5925.0), BandGroup::Wifi6);
    EXPECT_EQ(classify_wifi_band(7125.0), BandGroup::Wifi6);
    EXPECT_EQ(classify_wifi_band(7126.0), BandGroup::Other);
}

TEST(Layouts, DimensionsAndUniqueness) {
    EXPECT_EQ(layout(LayoutId::All72).size(), 72u);
    EXPECT_EQ(layout(LayoutId::No6Ghz67).size(), 67u);
    EXPECT_EQ(layout(LayoutId::No6GhzNoNr40).size(), 40u);
    EXPECT_EQ(layout(LayoutId::Best4).size(), 4u);
    for (LayoutId id :
         {LayoutId::All72, LayoutId::No6Ghz67, LayoutId::No6GhzNoNr40, LayoutId::Best4}) {
        const FeatureLayout& l = layout(id);
        std::set<std::string> unique(l.features.begin(), l.features.end());
        EXPECT_EQ(unique.size(), l.size()) << l.name;
        for (size_t i = 0; i < l.size(); ++i) EXPECT_EQ(l.index_of(l.features[i]), i);
    }
}

TEST(Layouts, ReducedLayoutsDropTheRightFeatures) {
    const FeatureLayout& no6 = layout(LayoutId::No6Ghz67);
    for (const auto& f : no6.features) EXPECT_NE(f.substr(0, 6), "wifi6_");
    EXPECT_TRUE(no6.contains("nr_low_rsrp_avg"));
    const FeatureLayout& no6nonr = layout(LayoutId::No6GhzNoNr40);
    for (const auto& f : no6nonr.features) {
        EXPECT_NE(f.substr(0, 6), "wifi6_");
        EXPECT_NE(f.substr(0, 3), "nr_");
    }
    EXPECT_TRUE(no6nonr.contains("lte_low_rsrp_avg"));
}

TEST(Layouts, BestFourOrder) {
    const FeatureLayout& b = layout(LayoutId::Best4);
    ASSERT_EQ(b.size(), 4u);
    EXPECT_EQ(b.features[0], "gps_vertical_accuracy");
    EXPECT_EQ(b.features[1], "gps_horizontal_accuracy");
    EXPECT_EQ(b.features[2], "wifi5_unique_bssid");
    EXPECT_EQ(b.features[3], "wifi5_rssi_max");
}

TEST(Layouts, LookupByName) {
    EXPECT_EQ(&layout_by_name("all72"), &layout(LayoutId::All72));
    EXPECT_EQ(&layout_by_name("no6ghz67"), &layout(LayoutId::No6Ghz67));
    EXPECT_EQ(&layout_by_name("no6ghznonr40"), &layout(LayoutId::No6GhzNoNr40));
    EXPECT_EQ(&layout_by_name("best4"), &layout(LayoutId::Best4));
    EXPECT_THROW(layout_by_name("all-72"), Error);
}

RawRecord record_with_everything() {
    RawRecord r;
    r.timestamp = 0;
    r.sim = SimOperator::Att;
    auto lte = [&](int pci, std::int64_t khz, double rsrp, double rsrq, double rssi) {
        LteObservation o;
        o.pci = pci;
        o.frequency_khz = khz;
        o.rsrp_dbm = rsrp;
        o.rsrq_db = rsrq;
        o.rssi_dbm = rssi;
        r.lte.push_back(o);
    };
    lte(1, 738000, -100.0, -12.0, -70.0);   // low band
    lte(2, 738000, -90.0, -10.0, -60.0);    // low band, second carrier
    lte(3, 1957500, -95.0, -11.0, -65.0);   // mid band
    NrObservation n;
    n.pci = 7;
    n.frequency_khz = 3550000;  // mid band
    n.rsrp_dbm = -85.0;
    n.rsrq_db = -9.0;
    n.sinr_db = 15.0;
    r.nr.push_back(n);
    auto wifi = [&](const char* bssid, int mhz, double rssi) {
        WifiObservation w;
        w.bssid = bssid;
        w.frequency_mhz = mhz;
        w.rssi_dbm = rssi;
        r.wifi.push_back(w);
    };
    wifi("a", 2437, -50.0);
    wifi("b", 2437, -54.0);
    wifi("c", 5500, -60.0);
    wifi("d", 6055, -48.0);
    GpsFix g;
    g.longitude_deg = -88.0;
    g.latitude_deg = 40.0;
    g.altitude_m = 200.0;
    g.horizontal_accuracy_m = 4.0;
    g.vertical_accuracy_m = 6.0;
    r.gps = g;
    return r;
}

TEST(Extract, KnownRecordProducesExactStats) {
    RawRecord r = record_with_everything();
    const FeatureLayout& l = layout(LayoutId::All72);
    std::vector<double> f = extract_features(r, l);
    ASSERT_EQ(f.size(), 72u);
    auto at = [&](const char* name) { return f[l.index_of(name)]; };

    // LTE low band: rssi {-70,-60}, rsrp {-100,-90}, rsrq {-12,-10}, 2 PCIs.
    EXPECT_DOUBLE_EQ(at("lte_low_rssi_min"), -70.0);
    EXPECT_DOUBLE_EQ(at("lte_low_rssi_max"), -60.0);
    EXPECT_DOUBLE_EQ(at("lte_low_rssi_avg"), -65.0);
    EXPECT_DOUBLE_EQ(at("lte_low_rssi_std"), 5.0);
    EXPECT_DOUBLE_EQ(at("lte_low_rsrp_avg"), -95.0);
    EXPECT_DOUBLE_EQ(at("lte_low_rsrq_std"), 1.0);
    EXPECT_DOUBLE_EQ(at("lte_low_unique_pci"), 2.0);
    // LTE mid band: one carrier.
    EXPECT_DOUBLE_EQ(at("lte_mid_rsrp_min"), -95.0);
    EXPECT_DOUBLE_EQ(at("lte_mid_rsrp_std"), 0.0);
    EXPECT_DOUBLE_EQ(at("lte_mid_unique_pci"), 1.0);
    // NR: mid band only; low band is sentinel-filled.
    EXPECT_DOUBLE_EQ(at("nr_mid_rsrp_avg"), -85.0);
    EXPECT_DOUBLE_EQ(at("nr_mid_sinr_max"), 15.0);
    EXPECT_DOUBLE_EQ(at("nr_mid_unique_pci"), 1.0);
    EXPECT_DOUBLE_EQ(at("nr_low_rsrp_min"), -140.0);
    EXPECT_DOUBLE_EQ(at("nr_low_sinr_avg"), -23.0);
    EXPECT_DOUBLE_EQ(at("nr_low_unique_pci"), 0.0);
    EXPECT_DOUBLE_EQ(at("nr_present"), 1.0);
    // WiFi.
    EXPECT_DOUBLE_EQ(at("wifi24_rssi_min"), -54.0);
    EXPECT_DOUBLE_EQ(at("wifi24_rssi_max"), -50.0);
    EXPECT_DOUBLE_EQ(at("wifi24_rssi_avg"), -52.0);
    EXPECT_DOUBLE_EQ(at("wifi24_rssi_std"), 2.0);
    EXPECT_DOUBLE_EQ(at("wifi24_unique_bssid"), 2.0);
    EXPECT_DOUBLE_EQ(at("wifi5_rssi_avg"), -60.0);
    EXPECT_DOUBLE_EQ(at("wifi5_unique_bssid"), 1.0);
    EXPECT_DOUBLE_EQ(at("wifi6_rssi_max"), -48.0);
    EXPECT_DOUBLE_EQ(at("wifi6_unique_bssid"), 1.0);
    // GPS and SIM.
    EXPECT_DOUBLE_EQ(at("gps_horizontal_accuracy"), 4.0);
    EXPECT_DOUBLE_EQ(at("gps_vertical_accuracy"), 6.0);
    EXPECT_DOUBLE_EQ(at("gps_altitude"), 200.0);
    EXPECT_DOUBLE_EQ(at("sim_code"), 1.0);  // Att
}

TEST(Extract, MissingRadiosFillWithSentinels) {
    RawRecord r;
    r.timestamp = 0;
    WifiObservation w;
    w.bssid = "only";
    w.frequency_mhz = 2437;
    w.rssi_dbm = -60.0;
    r.wifi.push_back(w);

    const FeatureLayout& l = layout(LayoutId::All72);
    std::vector<double> f = extract_features(r, l);
    auto at = [&](const char* name) { return f[l.index_of(name)]; };
    EXPECT_DOUBLE_EQ(at("lte_low_rssi_avg"), -120.0);
    EXPECT_DOUBLE_EQ(at("lte_low_rsrp_avg"), -140.0);
    EXPECT_DOUBLE_EQ(at("lte_mid_rsrq_min"), -34.0);
    EXPECT_DOUBLE_EQ(at("lte_low_unique_pci"), 0.0);
    EXPECT_DOUBLE_EQ(at("nr_mid_sinr_std"), -23.0);
    EXPECT_DOUBLE_EQ(at("nr_present"), 0.0);
    EXPECT_DOUBLE_EQ(at("wifi5_rssi_max"), -100.0);
    EXPECT_DOUBLE_EQ(at("wifi5_unique_bssid"), 0.0);
    EXPECT_DOUBLE_EQ(at("gps_horizontal_accuracy"), 10000.0);
    EXPECT_DOUBLE_EQ(at("gps_vertical_accuracy"), 10000.0);
    EXPECT_DOUBLE_EQ(at("gps_altitude"), 0.0);
    EXPECT_DOUBLE_EQ(at("sim_code"), 3.0);  // Unknown
}

TEST(Extract, MmWaveNrStillSetsPresenceFlag) {
    RawRecord r;
    r.timestamp = 0;
    NrObservation n;
    n.pci = 1;
    n.frequency_khz = 28000000;  // 28 GHz, outside both tracked bands
    n.rsrp_dbm = -80.0;
    n.rsrq_db = -8.0;
    n.sinr_db = 20.0;
    r.nr.push_back(n);
    const FeatureLayout& l = layout(LayoutId::All72);
    std::vector<double> f = extract_features(r, l);
    EXPECT_DOUBLE_EQ(f[l.index_of("nr_present")], 1.0);
    EXPECT_DOUBLE_EQ(f[l.index_of("nr_low_unique_pci")], 0.0);
    EXPECT_DOUBLE_EQ(f[l.index_of("nr_mid_unique_pci")], 0.0);
}

TEST(Extract, LteWithoutRssiLeavesRssiPoolEmpty) {
    RawRecord r;
    r.timestamp = 0;
    LteObservation o;
    o.pci = 1;
    o.frequency_khz = 738000;
    o.rsrp_dbm = -90.0;
    o.rsrq_db = -10.0;
    // rssi_dbm absent
    r.lte.push_back(o);
    const FeatureLayout& l = layout(LayoutId::All72);
    std::vector<double> f = extract_features(r, l);
    EXPECT_DOUBLE_EQ(f[l.index_of("lte_low_rssi_avg")], -120.0);   // sentinel
    EXPECT_DOUBLE_EQ(f[l.index_of("lte_low_rsrp_avg")], -90.0);    // real
    EXPECT_DOUBLE_EQ(f[l.index_of("lte_low_unique_pci")], 1.0);
}

TEST(Extract, ProjectionEqualsDirectExtraction) {
    RawRecord r = record_with_everything();
    for (LayoutId target : {LayoutId::No6Ghz67, LayoutId::No6GhzNoNr40, LayoutId::Best4}) {
        std::vector<double> direct = extract_features(r, layout(target));
        std::vector<double> via72 =
            project(extract_features(r, layout(LayoutId::All72)), layout(LayoutId::All72),
                    layout(target));
        EXPECT_EQ(direct, via72) << layout(target).name;
    }
}

TEST(Extract, ProjectionComposes) {
    RawRecord r = record_with_everything();
    std::vector<double> all = extract_features(r, layout(LayoutId::All72));
    std::vector<double> through67 = project(project(all, layout(LayoutId::All72),
                                                    layout(LayoutId::No6Ghz67)),
                                            layout(LayoutId::No6Ghz67),
                                            layout(LayoutId::No6GhzNoNr40));
    std::vector<double> direct = project(all, layout(LayoutId::All72),
                                         layout(LayoutId::No6GhzNoNr40));
    EXPECT_EQ(through67, direct);
}

TEST(Extract, ProjectionToWiderLayoutFails) {
    std::vector<double> four(4, 0.0);
    EXPECT_THROW(project(four, layout(LayoutId::Best4), layout(LayoutId::All72)), Error);
    std::vector<double> wrong(5, 0.0);
    EXPECT_THROW(project(wrong, layout(LayoutId::Best4), layout(LayoutId::Best4)), Error);
}

TEST(Extract, PooledGroupUnionsObservationsAndAveragesGps) {
    RawRecord a = record_with_everything();
    RawRecord b = record_with_everything();
    b.wifi.clear();
    WifiObservation w;
    w.bssid = "e";  // new AP, 2.4 GHz
    w.frequency_mhz = 2412;
    w.rssi_dbm = -70.0;
    b.wifi.push_back(w);
    b.gps->horizontal_accuracy_m = 8.0;
    b.gps->altitude_m = 210.0;

    const FeatureLayout& l = layout(LayoutId::All72);
    std::vector<double> f = extract_features({&a, &b}, l);
    auto at = [&](const char* name) { return f[l.index_of(name)]; };
    EXPECT_DOUBLE_EQ(at("wifi24_unique_bssid"), 3.0);  // a, b, e
    EXPECT_DOUBLE_EQ(at("wifi24_rssi_min"), -70.0);
    EXPECT_DOUBLE_EQ(at("wifi24_rssi_avg"), (-50.0 - 54.0 - 70.0) / 3.0);
    EXPECT_DOUBLE_EQ(at("lte_low_unique_pci"), 2.0);   // same PCIs both records
    EXPECT_DOUBLE_EQ(at("gps_horizontal_accuracy"), 6.0);  // mean of 4 and 8
    EXPECT_DOUBLE_EQ(at("gps_altitude"), 205.0);
    EXPECT_DOUBLE_EQ(at("sim_code"), 1.0);

    EXPECT_THROW(extract_features(std::vector<const RawRecord*>{}, l), Error);
}

TEST(Normalizer, FitApplyClamp) {
    const FeatureLayout& l = layout(LayoutId::Best4);
    std::vector<std::vector<double>> rows = {
        {0.0, 10.0, 5.0, -80.0},
        {10.0, 20.0, 5.0, -40.0},
        {5.0, 15.0, 5.0, -60.0},
    };
    MinMaxNormalizer n = MinMaxNormalizer::fit(rows, l);
    std::vector<double> mid = n.apply({5.0, 15.0, 5.0, -60.0});
    EXPECT_DOUBLE_EQ(mid[0], 0.5);
    EXPECT_DOUBLE_EQ(mid[1], 0.5);
    EXPECT_DOUBLE_EQ(mid[2], 0.0);  // constant column maps to 0
    EXPECT_DOUBLE_EQ(mid[3], 0.5);
    std::vector<double> low = n.apply({-100.0, 10.0, 5.0, -80.0});
    EXPECT_DOUBLE_EQ(low[0], 0.0);  // clamped below
    std::vector<double> high = n.apply({100.0, 20.0, 5.0, -40.0});
    EXPECT_DOUBLE_EQ(high[0], 1.0);  // clamped above
    for (double x : n.apply({3.0, 12.0, 5.0, -55.0})) {
        EXPECT_GE(x, 0.0);
        EXPECT_LE(x, 1.0);
    }
}

TEST(Normalizer, Validation) {
    const FeatureLayout& l = layout(LayoutId::Best4);
    EXPECT_THROW(MinMaxNormalizer::fit({}, l), Error);
    EXPECT_THROW(MinMaxNormalizer::fit({{1.0, 2.0}}, l), Error);
    MinMaxNormalizer n = MinMaxNormalizer::fit({{0.0, 0.0, 0.0, 0.0}}, l);
    EXPECT_THROW(n.apply({1.0}), Error);
}

TEST(Normalizer, JsonRoundTrip) {
    const FeatureLayout& l = layout(LayoutId::Best4);
    std::vector<std::vector<double>> rows = {{0.25, -1.5, 3.0, 7.125}, {1.75, 2.5, 3.0, -7.0}};
    MinMaxNormalizer n = MinMaxNormalizer::fit(rows, l);
    MinMaxNormalizer back = MinMaxNormalizer::from_json(n.to_json());
    EXPECT_EQ(back.feature_names, n.feature_names);
    EXPECT_EQ(back.col_min, n.col_min);
    EXPECT_EQ(back.col_max, n.col_max);

    nlohmann::json bad = n.to_json();
    bad["min"] = std::vector<double>{1.0};
    EXPECT_THROW(MinMaxNormalizer::from_json(bad), Error);
}

}  // namespace
