#include <cmath>

#include <gtest/gtest.h>

#include "gpsoh/dva.hpp"
#include "gpsoh/scenarios.hpp"

using namespace gpsoh;

namespace {

// Low-rate discharge record with V as a known function of discharged Ah.
struct Record {
    std::vector<double> v, i, t;
};

template <class F>
Record record(F v_of_q, double q_total, double current = -0.02, double dt = 10.0) {
    Record r;
    const double dq = -current * dt / 3600.0;
    for (int k = 0; k * dq <= q_total; ++k) {
        r.t.push_back(k * dt);
        r.i.push_back(current);
        r.v.push_back(v_of_q(k * dq));
    }
    return r;
}

DvdqCurve gaussian_bump_curve(double centre, double age, double height = 1.0, double width = 0.01) {
    DvdqCurve c;
    c.age_days = age;
    for (int k = 0; k <= 280; ++k) {
        const double x = k * 0.001;
        c.ah.push_back(x);
        c.value.push_back(height * std::exp(-0.5 * std::pow((x - centre) / width, 2)));
    }
    return c;
}

}  // namespace

TEST(Dvdq, LinearVoltageGivesConstantSlope) {
    const Record r = record([](double q) { return 4.1 - 3.0 * q; }, 0.28);
    const DvdqCurve c = dvdq_from_discharge(r.v, r.i, r.t, 12);
    for (double d : c.value) EXPECT_NEAR(d, -3.0, 1e-9);
}

TEST(Dvdq, SineShapeMatchesAnalyticDerivative) {
    const double w = 2 * 3.141592653589793 / 0.28;
    const Record r = record([w](double q) { return 3.7 + 0.05 * std::sin(w * q) - 2.0 * q; }, 0.28);
    const DvdqCurve c = dvdq_from_discharge(r.v, r.i, r.t, 12);
    for (std::size_t k = 0; k < c.ah.size(); ++k) {
        const double q = c.ah[k];
        const double ref = 0.05 * w * std::cos(w * q) - 2.0;
        EXPECT_NEAR(c.value[k], ref, 0.01 * std::abs(ref));
    }
}

TEST(Dvdq, OutputLengthTrimsWindow) {
    const Record r = record([](double q) { return 4.0 - q; }, 0.1);
    for (int h : {2, 5, 12}) EXPECT_EQ(dvdq_from_discharge(r.v, r.i, r.t, h).ah.size(), r.v.size() - 2 * h);
    const Record tiny = record([](double q) { return 4.0 - q; }, 0.0005);
    EXPECT_THROW(dvdq_from_discharge(tiny.v, tiny.i, tiny.t, 12), DataError);
}

TEST(Dvdq, InvariantToVoltageOffset) {
    const Record r = record([](double q) { return 3.9 - q + 0.02 * std::sin(40 * q); }, 0.28);
    std::vector<double> shifted = r.v;
    for (double& x : shifted) x += 0.137;
    const DvdqCurve a = dvdq_from_discharge(r.v, r.i, r.t), b = dvdq_from_discharge(shifted, r.i, r.t);
    for (std::size_t k = 0; k < a.value.size(); ++k) EXPECT_NEAR(a.value[k], b.value[k], 1e-9);
}

TEST(Dirdq, ConstantResistanceGivesZeroCurve) {
    const auto soc = scenarios::linspace(0, 1, 101);
    const std::vector<double> r0(101, 0.13);
    for (double v : dirdq_from_estimates(soc, r0, 0.27, -0.14).value) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Dirdq, CapacityScalesAxisAndCurrentScalesValue) {
    const auto soc = scenarios::linspace(0, 1, 51);
    std::vector<double> r0;
    for (double z : soc) r0.push_back(0.13 + 0.02 * z * z);
    const DvdqCurve a = dirdq_from_estimates(soc, r0, 0.28, -0.14);
    const DvdqCurve b = dirdq_from_estimates(soc, r0, 0.28 * 0.9, -0.14);
    const DvdqCurve c = dirdq_from_estimates(soc, r0, 0.28, -0.28);
    for (std::size_t k = 0; k < a.ah.size(); ++k) {
        EXPECT_NEAR(b.ah[k], 0.9 * a.ah[k], 1e-15);
        EXPECT_NEAR(b.value[k], a.value[k] / 0.9, 1e-12);
        EXPECT_NEAR(c.value[k], 2.0 * a.value[k], 1e-12);
    }
}

TEST(Dirdq, RecoversInjectedFeaturePosition) {
    // I R0 carries a voltage dip shaped like an OCV step at z = 0.35, i.e. a
    // d/dQ peak at 0.65 Q.
    const double q = 0.27, i_ref = -0.14;
    const auto soc = scenarios::linspace(0, 1, 101);
    std::vector<double> r0;
    for (double z : soc) r0.push_back(0.13 - 0.01 / i_ref * scenarios::logistic((z - 0.35) / 0.04));
    const DvdqCurve c = dirdq_from_estimates(soc, r0, q, i_ref);
    const auto peaks = find_peaks(c, PeakOptions{});
    ASSERT_EQ(peaks.size(), 1u);
    EXPECT_NEAR(peaks[0].position, 0.65 * q, 0.02 * q);
}

TEST(Correlate, ProportionalAffineAndDegenerate) {
    Eigen::MatrixXd r(5, 3), d(5, 3);
    for (int a = 0; a < 5; ++a) {
        r(a, 0) = 0.13 + 0.001 * a;
        d(a, 0) = -0.14 * 0.001 * a;  // opposite sign, perfectly linear
        r(a, 1) = 0.13 + 0.001 * a * a;
        d(a, 1) = 3.0 * r(a, 1) - 7.0;
        r(a, 2) = 0.13;
        d(a, 2) = 0.001 * a;
    }
    const auto c = correlate_r0_docv(r, d);
    EXPECT_NEAR(*c[0], -1.0, 1e-12);
    EXPECT_NEAR(*c[1], 1.0, 1e-12);
    EXPECT_FALSE(c[2].has_value());
    EXPECT_THROW(correlate_r0_docv(r.topRows(2), d.topRows(2)), InvalidArgument);
}

TEST(TrackPeaks, LinearDriftSlope) {
    std::vector<DvdqCurve> curves;
    for (int a = 0; a < 10; ++a) curves.push_back(gaussian_bump_curve(0.2 - 0.0015 * a, 10.0 * a));
    const PeakTrack t = track_peaks(curves);
    std::vector<double> ages, pos;
    for (std::size_t k = 0; k < t.ages.size(); ++k) {
        ASSERT_EQ(t.peaks[k].size(), 1u);
        EXPECT_EQ(t.peaks[k][0].id, 0);
        ages.push_back(t.ages[k]);
        pos.push_back(t.peaks[k][0].position);
    }
    const double ma = std::accumulate(ages.begin(), ages.end(), 0.0) / 10, mp = std::accumulate(pos.begin(), pos.end(), 0.0) / 10;
    double sxy = 0, sxx = 0;
    for (int k = 0; k < 10; ++k) {
        sxy += (ages[k] - ma) * (pos[k] - mp);
        sxx += (ages[k] - ma) * (ages[k] - ma);
    }
    EXPECT_NEAR(sxy / sxx, -0.00015, 0.05 * 0.00015);
}

TEST(TrackPeaks, ThresholdAboveMaximumGivesEmptyTrack) {
    std::vector<DvdqCurve> curves{gaussian_bump_curve(0.1, 0), gaussian_bump_curve(0.11, 1)};
    PeakOptions o;
    o.prominence_threshold = 1.0 + 1.0;
    const PeakTrack t = track_peaks(curves, o);
    for (const auto& p : t.peaks) EXPECT_TRUE(p.empty());
}

TEST(TrackPeaks, WellSeparatedPeaksKeepIds) {
    std::vector<DvdqCurve> curves;
    for (int a = 0; a < 8; ++a) {
        DvdqCurve c = gaussian_bump_curve(0.08 + 0.004 * a, a);
        const DvdqCurve d = gaussian_bump_curve(0.18 - 0.004 * a, a, 0.7);
        for (std::size_t k = 0; k < c.value.size(); ++k) c.value[k] += d.value[k];
        curves.push_back(c);
    }
    const PeakTrack t = track_peaks(curves);
    for (std::size_t k = 0; k < t.ages.size(); ++k) {
        ASSERT_EQ(t.peaks[k].size(), 2u);
        EXPECT_LT(t.find(k, 0)->position, t.find(k, 1)->position);
    }
}

TEST(DegradationModes, NoMovementAndConstructedCompression) {
    std::vector<DvdqCurve> curves;
    curves.push_back(gaussian_bump_curve(0.05, 0));
    for (std::size_t k = 0; k < curves[0].value.size(); ++k)
        curves[0].value[k] += gaussian_bump_curve(0.25, 0).value[k];
    curves.push_back(curves[0]);
    curves[1].age_days = 50;
    // compress the pair distance by 10% around the first peak
    DvdqCurve c = gaussian_bump_curve(0.05, 100);
    const DvdqCurve d = gaussian_bump_curve(0.05 + 0.9 * 0.20, 100);
    for (std::size_t k = 0; k < c.value.size(); ++k) c.value[k] += d.value[k];
    curves.push_back(c);

    const PeakTrack t = track_peaks(curves);
    const std::vector<double> caps(3, 0.28), unc(3, 0.0005);
    const auto m = degradation_modes(t, caps, unc);
    ASSERT_EQ(m.size(), 3u);
    EXPECT_NEAR(*m[1].lli_pct, 0.0, m[1].lli_uncertainty_pct);
    EXPECT_NEAR(*m[1].lam_n_pct, 0.0, m[1].lam_n_uncertainty_pct);
    EXPECT_NEAR(*m[2].lam_n_pct, 10.0, m[2].lam_n_uncertainty_pct);
    EXPECT_NEAR(*m[2].lli_pct, 0.0, m[2].lli_uncertainty_pct);
}

TEST(DegradationModes, AbsentAnchorGivesNoValue) {
    std::vector<DvdqCurve> curves{gaussian_bump_curve(0.1, 0), gaussian_bump_curve(0.1, 1, 0.0)};
    const PeakTrack t = track_peaks(curves);
    const std::vector<double> caps(2, 0.28), unc(2, 0.0005);
    const auto m = degradation_modes(t, caps, unc);
    EXPECT_TRUE(m[0].lli_pct.has_value());
    EXPECT_FALSE(m[1].lli_pct.has_value());
    EXPECT_FALSE(m[0].lam_n_pct.has_value());
}
