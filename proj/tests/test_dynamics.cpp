#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "dsr/dynamics.hpp"
#include "dsr/models.hpp"

namespace {

using dsr::ChopperCycle;
using dsr::SpinEnsembleParams;

// Fixed-step RK4 on the rate equation, with steps aligned to the laser edges.
double rk4_polarization(const ChopperCycle& c, const SpinEnsembleParams& ens, double p_sat, double t_end) {
    const double h = c.period_s * 1e-4;
    double p = 0.0;
    double t = 0.0;
    auto rhs = [&](double tt, double pp) {
        const double phase = std::fmod(tt, c.period_s);
        return phase < c.duty * c.period_s - 1e-15 ? (p_sat - pp) / ens.t1_light_s : -pp / ens.t1_dark_s;
    };
    while (t < t_end - 1e-15) {
        const double step = std::min(h, t_end - t);
        const double mid = t + 0.5 * step;  // evaluate the laser state at the step midpoint
        const double k1 = rhs(mid, p);
        const double k2 = rhs(mid, p + 0.5 * step * k1);
        const double k3 = rhs(mid, p + 0.5 * step * k2);
        const double k4 = rhs(mid, p + step * k3);
        p += step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
        t += step;
    }
    return p;
}

TEST(ChopperCycle, Validation) {
    ChopperCycle c;
    EXPECT_NO_THROW(c.validate());
    c.dt_s = c.period_s / 20;
    EXPECT_THROW(c.validate(), dsr::invalid_parameter);
    c = ChopperCycle{};
    c.duty = 1.2;
    EXPECT_THROW(c.validate(), dsr::invalid_parameter);
    c = ChopperCycle{};
    c.period_s = 0;
    EXPECT_THROW(c.validate(), dsr::invalid_parameter);
    EXPECT_EQ(ChopperCycle{}.n_samples(), 20000u);
}

TEST(ChopperCycle, Segments) {
    ChopperCycle c;
    c.n_periods = 2;
    const auto segs = dsr::laser_segments(c);
    ASSERT_EQ(segs.size(), 4u);
    EXPECT_TRUE(segs[0].laser_on);
    EXPECT_FALSE(segs[1].laser_on);
    EXPECT_DOUBLE_EQ(segs[1].start_s, 2e-3);
    EXPECT_DOUBLE_EQ(segs[3].end_s, 8e-3);
    c.duty = 0.0;
    EXPECT_EQ(dsr::laser_segments(c).size(), 2u);
}

TEST(PolarizationTrace, SaturatesUnderContinuousLight) {
    SpinEnsembleParams ens;
    ChopperCycle c;
    c.duty = 1.0;
    c.period_s = 11 * ens.t1_light_s;
    c.dt_s = c.period_s / 1000;
    c.n_periods = 1;
    const auto tr = dsr::polarization_trace(c, ens, 0.8);
    EXPECT_NEAR(tr.p.back(), 0.8, 1e-4);
}

TEST(PolarizationTrace, RelaxesInTheDark) {
    SpinEnsembleParams ens;
    ChopperCycle c;
    c.duty = 0.0;
    c.period_s = 11 * ens.t1_dark_s;
    c.dt_s = c.period_s / 1000;
    c.n_periods = 1;
    const auto tr = dsr::polarization_trace(c, ens, 1.0, 1.0);
    EXPECT_DOUBLE_EQ(tr.p.front(), 1.0);
    EXPECT_LT(tr.p.back(), 1e-4);
}

TEST(PolarizationTrace, ZeroDutyStaysThermal) {
    ChopperCycle c;
    c.duty = 0.0;
    const auto tr = dsr::polarization_trace(c, SpinEnsembleParams{}, 1.0);
    EXPECT_TRUE(std::all_of(tr.p.begin(), tr.p.end(), [](double v) { return v == 0.0; }));
}

TEST(PolarizationTrace, RejectsBadSaturation) {
    EXPECT_THROW(dsr::polarization_trace(ChopperCycle{}, SpinEnsembleParams{}, 0.0), dsr::invalid_parameter);
    EXPECT_THROW(dsr::polarization_trace(ChopperCycle{}, SpinEnsembleParams{}, 1.01), dsr::invalid_parameter);
}

TEST(PolarizationTrace, MatchesRk4Integration) {
    SpinEnsembleParams ens;
    ChopperCycle c;
    c.n_periods = 3;
    const auto tr = dsr::polarization_trace(c, ens, 0.9);
    for (std::size_t j : {std::size_t{500}, std::size_t{2000}, std::size_t{3100}, std::size_t{4000},
                          std::size_t{7999}, std::size_t{11000}}) {
        EXPECT_NEAR(tr.p[j], rk4_polarization(c, ens, 0.9, tr.times[j]), 1e-9) << j;
    }
}

TEST(PolarizationTrace, ContinuousAcrossLaserEdges) {
    SpinEnsembleParams ens;
    ChopperCycle c;
    const auto tr = dsr::polarization_trace(c, ens, 1.0);
    // maximum slope is 1/t1_light; any jump would exceed slope * dt
    const double max_step = c.dt_s / ens.t1_light_s;
    for (std::size_t j = 1; j < tr.p.size(); ++j) EXPECT_LE(std::fabs(tr.p[j] - tr.p[j - 1]), max_step);
    // the edge sample equals the end value of the previous segment's closed form
    const std::size_t edge = 2000;  // t = 2 ms, laser turns off
    ASSERT_DOUBLE_EQ(tr.times[edge], 2e-3);
    EXPECT_DOUBLE_EQ(tr.p[edge], 1.0 - std::exp(-2e-3 / ens.t1_light_s));
}

TEST(PolarizationTrace, MonotoneWithinSegments) {
    SpinEnsembleParams ens;
    ChopperCycle c;
    const auto tr = dsr::polarization_trace(c, ens, 0.7);
    int checked = 0;
    for (const auto& seg : dsr::laser_segments(c)) {
        std::vector<double> inside;
        for (std::size_t j = 0; j < tr.times.size(); ++j)
            if (tr.times[j] > seg.start_s + 1e-12 && tr.times[j] < seg.end_s - 1e-12) inside.push_back(tr.p[j]);
        for (std::size_t i = 1; i < inside.size(); ++i, ++checked) {
            if (seg.laser_on) EXPECT_GT(inside[i], inside[i - 1]);
            else EXPECT_LT(inside[i], inside[i - 1]);
        }
    }
    EXPECT_GT(checked, 19000);
    for (double v : tr.p) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 0.7);
    }
}

TEST(PolarizationTrace, PeriodicSteadyState) {
    SpinEnsembleParams ens;
    ChopperCycle c;
    c.n_periods = 7;
    const auto tr = dsr::polarization_trace(c, ens, 1.0);
    const std::size_t per = static_cast<std::size_t>(std::llround(c.period_s / c.dt_s));
    for (std::size_t j = 0; j < per; ++j) EXPECT_NEAR(tr.p[5 * per + j], tr.p[6 * per + j], 1e-8);
}

TEST(PolarizationTrace, HalfCycleFitsRecoverT1) {
    SpinEnsembleParams ens;  // t1_light = 427 us, t1_dark = 740 us
    ChopperCycle c;
    const auto tr = dsr::polarization_trace(c, ens, 1.0);
    for (const auto& seg : dsr::laser_segments(c)) {
        if (seg.start_s < 2 * c.period_s) continue;  // use a later period
        std::vector<double> t, y;
        for (std::size_t j = 0; j < tr.times.size(); ++j) {
            if (tr.times[j] >= seg.start_s && tr.times[j] < seg.end_s) {
                t.push_back(tr.times[j] - seg.start_s);
                y.push_back(tr.p[j]);
            }
        }
        const double tau_true = seg.laser_on ? ens.t1_light_s : ens.t1_dark_s;
        const auto fit = dsr::fit_exponential(t, y, {seg.laser_on ? -1.0 : 1.0, 5e-4, seg.laser_on ? 1.0 : 0.0});
        ASSERT_TRUE(fit.converged);
        EXPECT_NEAR(fit.value("tau") / tau_true, 1.0, 0.005);
        EXPECT_NEAR(fit.value("tau") / tau_true, 1.0, 1e-7);
    }
}

class PhaseTraceTest : public ::testing::Test {
protected:
    SpinEnsembleParams ens;
    dsr::CavityParams cav;
    ChopperCycle cycle;
    double b_res = dsr::resonance_field(cav.resonance_hz, ens);
};

TEST_F(PhaseTraceTest, NoPolarizationNoSignal) {
    dsr::PolarizationTrace tr;
    tr.dt = 1e-6;
    for (int j = 0; j < 100; ++j) {
        tr.times.push_back(j * 1e-6);
        tr.p.push_back(0.0);
    }
    cav.phase_offset = 0.2;
    const auto ph = dsr::phase_trace(tr, ens, cav, 30.0, true);
    EXPECT_TRUE(ph.offset_subtracted);
    for (double v : ph.phase) EXPECT_EQ(v, 0.0);
    const auto full = dsr::phase_trace(tr, ens, cav, 30.0, true, false);
    for (double v : full.phase) EXPECT_EQ(v, 0.0);
}

TEST_F(PhaseTraceTest, OffsetSubtractionZeroesMean) {
    const auto tr = dsr::polarization_trace(cycle, ens, 1.0);
    cav.phase_offset = -0.4;
    const auto ph = dsr::phase_trace(tr, ens, cav, 31.0, true, false);
    const double mean = std::accumulate(ph.phase.begin(), ph.phase.end(), 0.0) / ph.phase.size();
    EXPECT_NEAR(mean, 0.0, 1e-15);
    const auto raw = dsr::phase_trace(tr, ens, cav, 31.0, false, false);
    EXPECT_FALSE(raw.offset_subtracted);
    EXPECT_NEAR(raw.phase.front(), -0.4, 1e-12);
}

TEST_F(PhaseTraceTest, OppositeSideOfResonanceNegates) {
    const auto tr = dsr::polarization_trace(cycle, ens, 1.0);
    cav.phase_offset = 0.05;
    const auto below = dsr::phase_trace(tr, ens, cav, b_res - 2.5, true);
    const auto above = dsr::phase_trace(tr, ens, cav, b_res + 2.5, true);
    const double scale = *std::max_element(below.phase.begin(), below.phase.end());
    ASSERT_GT(scale, 0.0);
    for (std::size_t j = 0; j < below.phase.size(); ++j)
        EXPECT_NEAR(below.phase[j], -above.phase[j], 1e-9 * scale);
}

TEST_F(PhaseTraceTest, FieldMapGrowsTowardResonanceAndFlipsSign) {
    const auto tr = dsr::polarization_trace(cycle, ens, 1.0);
    std::vector<double> fields, contrast;
    for (double b = 28.0; b <= 38.5 + 1e-9; b += 0.5) {
        const auto ph = dsr::phase_trace(tr, ens, cav, b, true);
        // signed contrast: value at the end of the lit half-cycle
        fields.push_back(b);
        contrast.push_back(ph.phase[3 * 4000 + 1999]);
    }
    int sign_changes = 0;
    for (std::size_t i = 1; i < contrast.size(); ++i)
        if (contrast[i] * contrast[i - 1] < 0) ++sign_changes;
    EXPECT_EQ(sign_changes, 1);
    // far tails shrink relative to the region a few gauss from resonance
    auto at = [&](double b) {
        for (std::size_t i = 0; i < fields.size(); ++i)
            if (std::fabs(fields[i] - b) < 1e-9) return std::fabs(contrast[i]);
        return -1.0;
    };
    SpinEnsembleParams narrow = ens;
    narrow.t2_star_s = 1e-6;  // narrow line: 1/Delta growth toward resonance is visible on the grid
    std::vector<double> mags;
    for (double d : {6.0, 4.0, 2.0, 1.0}) {
        const auto ph = dsr::phase_trace(tr, narrow, cav, b_res + d, true);
        mags.push_back(std::fabs(ph.phase[3 * 4000 + 1999]));
    }
    EXPECT_TRUE(std::is_sorted(mags.begin(), mags.end()));
    EXPECT_GT(at(28.0), 0.0);
}

TEST_F(PhaseTraceTest, LinearResponseInShift) {
    const auto tr = dsr::polarization_trace(cycle, ens, 1.0);
    auto half = ens;
    half.n_spins *= 0.5;
    const auto full_shift = dsr::phase_trace(tr, ens, cav, 31.0, true, false);
    const auto half_shift = dsr::phase_trace(tr, half, cav, 31.0, true, false);
    double peak = 0.0;
    for (double v : full_shift.phase) peak = std::max(peak, std::fabs(v));
    ASSERT_LT(peak, 10e-3);
    for (std::size_t j = 0; j < full_shift.phase.size(); j += 37) {
        if (std::fabs(full_shift.phase[j]) < 0.05 * peak) continue;
        EXPECT_NEAR(half_shift.phase[j] / full_shift.phase[j], 0.5, 1e-3);
    }
}

} // namespace
