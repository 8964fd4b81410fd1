#include <sstream>

#include <gtest/gtest.h>

#include "gpsoh/datasets.hpp"
#include "gpsoh/scenarios.hpp"

using namespace gpsoh;

TEST(LoadCsv, WellFormedRows) {
    std::istringstream in("time_s,current_a,voltage_v\n0,0,4.1\n10,-0.1,4.0\n20,-0.1,3.99\n");
    const auto r = load_cycling_csv(in, CsvSchema{});
    ASSERT_EQ(r.size(), 3u);
    EXPECT_EQ(r[1].current, -0.1);
    EXPECT_EQ(r[2].voltage, 3.99);
}

TEST(LoadCsv, UnitAndSignMapping) {
    std::istringstream in("t;I_mA;U_mV\n0;0;4100\n1;140;4000\n");
    CsvSchema s;
    s.time_column = "t";
    s.current_column = "I_mA";
    s.voltage_column = "U_mV";
    s.delimiter = ';';
    s.time_scale = 60.0;
    s.current_scale = 1e-3;
    s.voltage_scale = 1e-3;
    s.discharge_positive = true;
    const auto r = load_cycling_csv(in, s);
    ASSERT_EQ(r.size(), 2u);
    EXPECT_DOUBLE_EQ(r[1].current, -0.14);
    EXPECT_DOUBLE_EQ(r[1].voltage, 4.0);
    EXPECT_DOUBLE_EQ(r[1].time_s, 60.0);
}

TEST(LoadCsv, MissingColumnNamesTheColumn) {
    std::istringstream in("time_s,amps,voltage_v\n0,0,4.1\n");
    try {
        load_cycling_csv(in, CsvSchema{});
        FAIL() << "expected ColumnMappingError";
    } catch (const ColumnMappingError& e) {
        EXPECT_NE(std::string(e.what()).find("current_a"), std::string::npos);
    }
}

TEST(LoadCsv, MalformedRowLimit) {
    std::ostringstream ok;
    ok << "time_s,current_a,voltage_v\n";
    for (int k = 0; k < 200; ++k) ok << k << ",-0.1,3.9\n";
    ok << "200,x,3.9\n";
    std::istringstream in1(ok.str());
    LoadReport rep;
    EXPECT_EQ(load_cycling_csv(in1, CsvSchema{}, &rep).size(), 200u);
    EXPECT_EQ(rep.malformed, 1u);

    std::ostringstream bad;
    bad << "time_s,current_a,voltage_v\n";
    for (int k = 0; k < 20; ++k) bad << k << (k % 5 == 0 ? ",,3.9\n" : ",-0.1,3.9\n");
    std::istringstream in2(bad.str());
    EXPECT_THROW(load_cycling_csv(in2, CsvSchema{}), DataError);
}

TEST(LoadCsv, IdempotentReload) {
    const std::string text = "time_s,current_a,voltage_v\n0,0,4.1\n10,-0.1,4.0\n";
    std::istringstream a(text), b(text);
    const auto ra = load_cycling_csv(a, CsvSchema{}), rb = load_cycling_csv(b, CsvSchema{});
    ASSERT_EQ(ra.size(), rb.size());
    for (std::size_t k = 0; k < ra.size(); ++k) {
        EXPECT_EQ(ra[k].time_s, rb[k].time_s);
        EXPECT_EQ(ra[k].voltage, rb[k].voltage);
    }
}

TEST(Extract, SingleDischarge) {
    std::vector<RawRecord> s;
    for (int k = 0; k < 10; ++k) s.push_back({10.0 * k, 0.0, 4.1});
    for (int k = 10; k < 40; ++k) s.push_back({10.0 * k, -0.14, 4.0 - 0.01 * (k - 10)});
    for (int k = 40; k < 50; ++k) s.push_back({10.0 * k, 0.0, 3.8});
    ExtractionCriteria c;
    c.nominal_capacity_ah = 0.28;
    const auto segs = extract_discharge_segments(s, 1, c);
    ASSERT_EQ(segs.size(), 1u);
    double charge = 0.0;
    for (std::size_t k = 1; k < segs[0].size(); ++k) {
        EXPECT_LE(segs[0].current[k], 0.0);
        charge += segs[0].current[k] * (segs[0].time_s[k] - segs[0].time_s[k - 1]);
    }
    EXPECT_LT(charge, 0.0);
    EXPECT_EQ(segs[0].role, SegmentRole::Train);
    EXPECT_THROW(extract_discharge_segments(s, 2, c), DataError);
}

TEST(Extract, EvenSelectionOverSyntheticLife) {
    scenarios::Schedule sch;
    sch.first_age = 0.5;
    sch.last_train_age = 100.5;
    sch.n_train = 51;  // a discharge every 2 days
    sch.test_offsets.clear();
    const SynthOutput syn = synth_generate(scenarios::linear_fade(sch), 3);
    const auto stream = synth_cycling_stream(syn);
    ExtractionCriteria c;
    c.nominal_capacity_ah = 0.28;
    c.n_train = 8;
    const auto segs = extract_discharge_segments(stream, 11, c);
    ASSERT_EQ(segs.size(), 11u);
    std::vector<double> gaps;
    for (std::size_t j = 1; j < segs.size(); ++j) gaps.push_back(segs[j].age_days - segs[j - 1].age_days);
    const auto [mn, mx] = std::minmax_element(gaps.begin(), gaps.end());
    EXPECT_LE(*mx - *mn, 2.0 + 1e-9);  // one cycle period
    EXPECT_EQ(segs[7].role, SegmentRole::Train);
    EXPECT_EQ(segs[8].role, SegmentRole::Test);
}

TEST(CalibrateOcv, RecoversOcvPlusOhmicOffset) {
    SynthSpec spec = scenarios::linear_fade();
    spec.ocv = OcvCurve({0.0, 1.0}, {3.0, 4.2});
    spec.noise_std = 0.0;
    const double i = -0.028;
    const auto rpt = synth_rpt_discharge(spec, i, 5.0, 1);
    const auto cal = calibrate_ocv(rpt, 100);
    EXPECT_EQ(cal.curve.soc_knots().size(), 100u);
    for (double z = 0.05; z < 0.95; z += 0.05) EXPECT_NEAR(cal.curve(z), 3.0 + 1.2 * z + 0.13 * i, 0.01);
    EXPECT_NEAR(cal.capacity_ah, 0.28, 0.002);
}

TEST(CalibrateOcv, EndpointsAtVoltageLimits) {
    SynthSpec spec = scenarios::linear_fade();
    spec.noise_std = 0.001;
    const auto cal = calibrate_ocv(synth_rpt_discharge(spec, -0.014, 10.0, 2), 100);
    EXPECT_NEAR(cal.curve(0.0), 3.0, 0.05);
    EXPECT_NEAR(cal.curve(1.0), 4.2, 0.05);
    const auto& v = cal.curve.voltage_knots();
    for (std::size_t k = 1; k < v.size(); ++k) EXPECT_GT(v[k], v[k - 1]);
}

TEST(Synth, ModelIdentityWithoutNoise) {
    SynthSpec spec = scenarios::linear_fade();
    spec.noise_std = 0.0;
    spec.ages = {5.0};
    const SynthOutput out = synth_generate(spec, 7);
    const Segment& s = out.segments[0];
    double z = 1.0;
    const double q = spec.capacity(5.0);
    EXPECT_EQ(s.voltage[0], terminal_voltage(1.0, 0.0, 0.13, spec.ocv));
    for (std::size_t k = 1; k < s.size(); ++k) {
        z = coulomb_step(z, s.current[k], s.time_s[k] - s.time_s[k - 1], 1.0 / q);
        EXPECT_NEAR(s.voltage[k], terminal_voltage(z, s.current[k], 0.13, spec.ocv), 1e-12);
    }
}

TEST(Synth, DurationsShrinkWithCapacity) {
    SynthSpec spec = scenarios::linear_fade();
    spec.drive = DriveProfile{};  // constant 0.14 A
    spec.ages = {0.0, 100.0};
    const SynthOutput out = synth_generate(spec, 8);
    const double ratio = out.segments[1].duration_s() / out.segments[0].duration_s();
    EXPECT_NEAR(ratio, 0.25 / 0.28, 0.01);
}

TEST(Synth, DeterministicPerSeed) {
    const SynthSpec spec = scenarios::linear_fade();
    const SynthOutput a = synth_generate(spec, 9), b = synth_generate(spec, 9), c = synth_generate(spec, 10);
    ASSERT_EQ(a.segments.size(), b.segments.size());
    for (std::size_t j = 0; j < a.segments.size(); ++j) EXPECT_EQ(a.segments[j].voltage, b.segments[j].voltage);
    EXPECT_NE(a.segments[0].voltage, c.segments[0].voltage);
}

TEST(SegmentFiles, RoundTrip) {
    const SynthOutput a = synth_generate(scenarios::linear_fade(), 4);
    const Segment back = segment_from_table(segment_table(a.segments[3]));
    EXPECT_EQ(back.age_days, a.segments[3].age_days);
    EXPECT_EQ(back.voltage, a.segments[3].voltage);
    EXPECT_EQ(back.current, a.segments[3].current);
    EXPECT_EQ(back.role, a.segments[3].role);
}
