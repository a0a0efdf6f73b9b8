#pragma once

// Spin polarization under a chopped pump laser and the resulting reflection-phase trace.

#include <cmath>
#include <cstddef>
#include <vector>

#include "dsr/error.hpp"
#include "dsr/physics.hpp"

namespace dsr {

struct ChopperCycle {
    double period_s = 4e-3;
    double duty = 0.5;  // fraction of each period with the laser on
    int n_periods = 5;
    double dt_s = 1e-6;

    void validate() const {
        detail::require(std::isfinite(period_s) && period_s > 0, "period_s", "chopper period must be > 0");
        // duty 0 (always dark) and 1 (always lit) are accepted as degenerate cycles
        detail::require(duty >= 0 && duty <= 1, "duty", "chopper duty must lie in [0, 1]");
        detail::require(n_periods >= 1, "n_periods", "chopper n_periods must be >= 1");
        detail::require(std::isfinite(dt_s) && dt_s > 0 && dt_s < period_s / 20, "dt_s",
                        "chopper dt must satisfy 0 < dt < period / 20");
    }

    std::size_t n_samples() const {
        return static_cast<std::size_t>(std::llround(n_periods * period_s / dt_s));
    }
};

struct LaserSegment {
    double start_s;
    double end_s;
    bool laser_on;
};

/// Laser-on and laser-off intervals of the cycle in time order; empty intervals are dropped.
inline std::vector<LaserSegment> laser_segments(const ChopperCycle& cycle) {
    cycle.validate();
    std::vector<LaserSegment> out;
    for (int k = 0; k < cycle.n_periods; ++k) {
        const double t0 = k * cycle.period_s;
        const double t_off = t0 + cycle.duty * cycle.period_s;
        const double t1 = (k + 1) * cycle.period_s;
        if (t_off > t0) out.push_back({t0, t_off, true});
        if (t1 > t_off) out.push_back({t_off, t1, false});
    }
    return out;
}

struct PolarizationTrace {
    std::vector<double> times;
    std::vector<double> p;
    double dt = 0.0;
};

struct PhaseTrace {
    std::vector<double> times;
    std::vector<double> phase;
    double b_gauss = 0.0;
    bool offset_subtracted = false;
};

namespace detail {

// Closed-form solution of one mono-exponential segment after elapsed time dt.
inline double evolve_polarization(double p0, double elapsed, bool laser_on, double p_sat,
                                  const SpinEnsembleParams& ens) {
    if (laser_on) return p_sat + (p0 - p_sat) * std::exp(-elapsed / ens.t1_light_s);
    return p0 * std::exp(-elapsed / ens.t1_dark_s);
}

} // namespace detail

/// Polarization p(t) over the chopper cycle, starting from the thermal state p = 0.
/// Laser on: dp/dt = (p_sat - p) / t1_light; laser off: dp/dt = -p / t1_dark.
inline PolarizationTrace polarization_trace(const ChopperCycle& cycle, const SpinEnsembleParams& ens,
                                            double p_sat = 1.0, double p_initial = 0.0) {
    cycle.validate();
    ens.validate();
    if (!(p_sat > 0 && p_sat <= 1)) throw invalid_parameter("p_sat", "saturation polarization must lie in (0, 1]");
    if (!(p_initial >= 0 && p_initial <= 1))
        throw invalid_parameter("p_initial", "initial polarization must lie in [0, 1]");

    const auto segments = laser_segments(cycle);
    const std::size_t n = cycle.n_samples();

    PolarizationTrace tr;
    tr.dt = cycle.dt_s;
    tr.times.resize(n);
    tr.p.resize(n);

    std::size_t seg = 0;
    double seg_start_p = p_initial;
    for (std::size_t j = 0; j < n; ++j) {
        const double t = static_cast<double>(j) * cycle.dt_s;
        while (seg + 1 < segments.size() && t >= segments[seg].end_s) {
            const auto& s = segments[seg];
            seg_start_p = detail::evolve_polarization(seg_start_p, s.end_s - s.start_s, s.laser_on, p_sat, ens);
            ++seg;
        }
        const auto& s = segments[seg];
        tr.times[j] = t;
        tr.p[j] = detail::evolve_polarization(seg_start_p, t - s.start_s, s.laser_on, p_sat, ens);
    }
    return tr;
}

/// Fractional probe detuning seen at the bare cavity frequency when the spins pull the
/// resonance by shift_hz.
inline double probe_detuning(const CavityParams& cav, double shift_hz) { return -shift_hz / cav.resonance_hz; }

/// Reflection phase at the bare cavity resonance while the ensemble follows trace.p.
/// `linearized` uses the resonant slope of the reflection model; otherwise the full model is evaluated.
inline PhaseTrace phase_trace(const PolarizationTrace& trace, const SpinEnsembleParams& ens, const CavityParams& cav,
                              double b_gauss, bool subtract_offset, bool linearized = true) {
    ens.validate();
    cav.validate();
    if (trace.times.size() != trace.p.size()) throw length_mismatch("polarization trace arrays differ in length");

    const double spin_hz = transition_frequency(b_gauss, ens);
    PhaseTrace out;
    out.times = trace.times;
    out.b_gauss = b_gauss;
    out.offset_subtracted = subtract_offset;
    out.phase.resize(trace.p.size());
    for (std::size_t j = 0; j < trace.p.size(); ++j) {
        const double shift = ensemble_dispersive_shift(ens, cav.resonance_hz, spin_hz, trace.p[j]);
        const double x = probe_detuning(cav, shift);
        out.phase[j] = linearized ? reflection_phase_linearized(cav, x) : reflection_phase(cav, x);
    }
    if (subtract_offset && !out.phase.empty()) {
        // averaged relative to the first sample so that a constant trace subtracts to exactly zero
        const double ref = out.phase.front();
        double acc = 0.0;
        for (double v : out.phase) acc += v - ref;
        const double mean_dev = acc / static_cast<double>(out.phase.size());
        for (auto& v : out.phase) v = (v - ref) - mean_dev;
    }
    return out;
}

} // namespace dsr
