#pragma once

// Fit models: resonator reflection phase, mono-exponential relaxation, and
// ensemble dispersive phase versus magnetic field.

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "dsr/dynamics.hpp"
#include "dsr/fit.hpp"
#include "dsr/physics.hpp"

namespace dsr {

namespace detail {
inline constexpr double inf = std::numeric_limits<double>::infinity();

// reflection_phase without parameter validation, for use inside the optimizer
inline double reflection_phase_unchecked(double q, double beta, double k, double phi0, double x) {
    const double two_qx = 2.0 * q * x;
    return 4.0 * beta * q * x / (two_qx * two_qx + (1.0 - beta * beta)) + k * x + phi0;
}
} // namespace detail

struct ReflectionInit {
    double quality_factor;
    double beta;
    double phase_slope = 0.0;
    double phase_offset = 0.0;
};

/// Parameters (Q, beta, k, phi0); x is the fractional detuning.
inline FitModel reflection_phase_model() {
    FitModel m;
    m.name = "reflection";
    m.param_names = {"Q", "beta", "k", "phi0"};
    m.lower = {0.0, 0.0, -detail::inf, -detail::inf};
    m.upper = {detail::inf, detail::inf, detail::inf, detail::inf};
    m.fixed = {false, false, false, false};
    m.evaluate = [](std::span<const double> p, double x) {
        return detail::reflection_phase_unchecked(p[0], p[1], p[2], p[3], x);
    };
    return m;
}

inline FitResult fit_reflection_phase(std::span<const double> fractional_detuning, std::span<const double> phase,
                                      const ReflectionInit& init, std::span<const double> y_err = {},
                                      const FitOptions& opts = {}) {
    const auto model = reflection_phase_model();
    const std::array<double, 4> p0{init.quality_factor, init.beta, init.phase_slope, init.phase_offset};
    if (y_err.empty()) return fit_nonlinear(model, fractional_detuning, phase, p0, opts);
    return fit_nonlinear(model, fractional_detuning, phase, y_err, p0, opts);
}

struct ExponentialInit {
    double amplitude;
    double tau;
    double offset = 0.0;
};

/// y = amplitude exp(-t / tau) + offset
inline FitModel exponential_model() {
    FitModel m;
    m.name = "exponential";
    m.param_names = {"amplitude", "tau", "offset"};
    m.lower = {-detail::inf, 0.0, -detail::inf};
    m.upper = {detail::inf, detail::inf, detail::inf};
    m.fixed = {false, false, false};
    m.evaluate = [](std::span<const double> p, double t) { return p[0] * std::exp(-t / p[1]) + p[2]; };
    return m;
}

inline FitResult fit_exponential(std::span<const double> t, std::span<const double> y, const ExponentialInit& init,
                                 std::span<const double> y_err = {}, const FitOptions& opts = {}) {
    const auto model = exponential_model();
    const std::array<double, 3> p0{init.amplitude, init.tau, init.offset};
    if (y_err.empty()) return fit_nonlinear(model, t, y, p0, opts);
    return fit_nonlinear(model, t, y, y_err, p0, opts);
}

/// Quantities held fixed in the shift-versus-field fit.
struct ShiftFieldSetup {
    SpinEnsembleParams ensemble;  // coupling, zfs, gamma and projection are used; n_spins/t2_star are fitted
    CavityParams cavity;
    double polarization = 1.0;
    double min_field_gauss = 28.0;  // the linear Zeeman model is not trusted below this field
};

/// Linearized reflection phase at the bare cavity frequency for a field sweep:
///   phase(B) = slope * (-shift(B) / f_c), shift from the Gaussian ensemble.
/// Parameters (n_spins, t2_star_s, coupling_hz); coupling is fixed by default because only
/// n_spins * g^2 is identifiable.
inline FitModel shift_vs_field_model(const ShiftFieldSetup& setup) {
    setup.cavity.validate();
    FitModel m;
    m.name = "shift_vs_field";
    m.param_names = {"n_spins", "t2_star_s", "coupling_hz"};
    m.lower = {0.0, 0.0, 0.0};
    m.upper = {detail::inf, detail::inf, detail::inf};
    m.fixed = {false, false, true};
    const double slope = setup.cavity.resonant_slope();
    m.evaluate = [setup, slope](std::span<const double> p, double b_gauss) {
        SpinEnsembleParams ens = setup.ensemble;
        ens.n_spins = p[0];
        ens.t2_star_s = p[1];
        ens.coupling_hz = p[2];
        const double shift = ensemble_dispersive_shift(ens, setup.cavity.resonance_hz,
                                                       transition_frequency(b_gauss, ens), setup.polarization);
        return slope * probe_detuning(setup.cavity, shift);
    };
    return m;
}

struct ShiftFieldInit {
    double n_spins;
    double t2_star_s;
};

/// Fits (n_spins, t2_star) with the coupling held at setup.ensemble.coupling_hz.
/// Points below setup.min_field_gauss are left out of the fit.
inline FitResult fit_shift_vs_field(std::span<const double> b_gauss, std::span<const double> phase,
                                    const ShiftFieldSetup& setup, const ShiftFieldInit& init,
                                    const FitOptions& opts = {}) {
    if (b_gauss.size() != phase.size()) throw length_mismatch("field and phase arrays differ in length");
    std::vector<double> b;
    std::vector<double> y;
    for (std::size_t i = 0; i < b_gauss.size(); ++i) {
        if (b_gauss[i] < setup.min_field_gauss) continue;
        b.push_back(b_gauss[i]);
        y.push_back(phase[i]);
    }
    const auto model = shift_vs_field_model(setup);
    const std::array<double, 3> p0{init.n_spins, init.t2_star_s, setup.ensemble.coupling_hz};
    return fit_nonlinear(model, b, y, p0, opts);
}

} // namespace dsr
