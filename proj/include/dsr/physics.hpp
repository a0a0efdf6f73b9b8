#pragma once

// Dispersive-limit physics of a spin ensemble coupled to a single resonator mode.
//
// Unit convention: every frequency (resonance, coupling, detuning, linewidth) is an
// ordinary frequency in Hz. Where a formula is written for angular frequencies the
// 2*pi factors are applied locally and noted.

#include <cmath>
#include <numbers>
#include <string>

#include "dsr/constants.hpp"
#include "dsr/error.hpp"
#include "dsr/special.hpp"

namespace dsr {

struct CavityParams {
    double resonance_hz = 2.815e9;
    double quality_factor = 6.0e3;
    double beta = 0.74;          // port coupling coefficient, 1 = critical
    double phase_slope = 0.0;    // k, rad per unit fractional detuning
    double phase_offset = 0.0;   // phi0, rad
    double beta_exclusion = 1e-3;

    void validate() const {
        detail::require(std::isfinite(resonance_hz) && resonance_hz > 0, "resonance_hz", "cavity resonance must be > 0");
        detail::require(std::isfinite(quality_factor) && quality_factor > 0, "quality_factor", "cavity quality factor must be > 0");
        detail::require(std::isfinite(beta) && beta >= 0, "beta", "cavity coupling beta must be >= 0");
        detail::require(beta_exclusion >= 0 && beta_exclusion < 1, "beta_exclusion", "beta exclusion band must lie in [0, 1)");
        detail::require(std::fabs(beta - 1.0) >= beta_exclusion, "beta",
                        "cavity coupling beta lies in the excluded band around critical coupling");
        detail::require(std::isfinite(phase_slope) && std::isfinite(phase_offset), "phase_slope", "cavity phase terms must be finite");
    }

    // d(phase)/d(fractional detuning) at the probe point x = 0.
    double resonant_slope() const {
        return 4.0 * beta * quality_factor / (1.0 - beta * beta) + phase_slope;
    }
};

struct SpinEnsembleParams {
    double n_spins = 2.0e12;
    double coupling_hz = 2.4e-2;  // single-spin g
    double zfs_hz = constants::nv_zero_field_splitting;
    double gamma_hz_per_gauss = constants::nv_gyromagnetic_ratio;
    double projection_factor = 1.0 / std::numbers::sqrt3;  // B along [001]
    double t2_star_s = 18e-9;
    double t1_dark_s = 740e-6;
    double t1_light_s = 427e-6;

    // Gaussian standard deviation of the spin transition frequencies.
    double linewidth_hz() const { return 1.0 / (constants::two_pi * t2_star_s); }

    void validate() const {
        // n_spins = 0 is accepted so that an empty ensemble can be simulated.
        detail::require(std::isfinite(n_spins) && n_spins >= 0, "n_spins", "ensemble n_spins must be >= 0");
        detail::require(std::isfinite(coupling_hz) && coupling_hz > 0, "coupling_hz", "ensemble coupling g must be > 0");
        detail::require(std::isfinite(zfs_hz) && zfs_hz > 0, "zfs_hz", "ensemble zero-field splitting must be > 0");
        detail::require(std::isfinite(gamma_hz_per_gauss) && gamma_hz_per_gauss > 0, "gamma_hz_per_gauss",
                        "ensemble gyromagnetic ratio must be > 0");
        detail::require(projection_factor > 0 && projection_factor <= 1, "projection_factor",
                        "ensemble projection factor must lie in (0, 1]");
        detail::require(std::isfinite(t2_star_s) && t2_star_s > 0, "t2_star_s", "ensemble t2_star must be > 0");
        detail::require(std::isfinite(t1_dark_s) && t1_dark_s > 0, "t1_dark_s", "ensemble t1_dark must be > 0");
        detail::require(std::isfinite(t1_light_s) && t1_light_s > 0, "t1_light_s", "ensemble t1_light must be > 0");
    }
};

// Target device used for the performance projections.
struct OptimizedDeviceParams {
    double coupling_hz = 0.3;
    double spin_frequency_hz = 1e10;
    double quality_factor = 1e4;
    double detuning_hz = 1e7;
    double t2_s = 1e-3;
    double n_spins = 1e14;

    void validate() const {
        auto pos = [](double v) { return std::isfinite(v) && v > 0; };
        detail::require(pos(coupling_hz), "coupling_hz", "device coupling must be > 0");
        detail::require(pos(spin_frequency_hz), "spin_frequency_hz", "device spin frequency must be > 0");
        detail::require(pos(quality_factor), "quality_factor", "device quality factor must be > 0");
        detail::require(pos(detuning_hz), "detuning_hz", "device detuning must be > 0");
        detail::require(pos(t2_s), "t2_s", "device t2 must be > 0");
        detail::require(pos(n_spins), "n_spins", "device n_spins must be > 0");
    }
};

/// Mean transition frequency of the lower (m_s = -1) branch in an axial field.
inline double transition_frequency(double b_gauss, const SpinEnsembleParams& ens) {
    if (!(b_gauss >= 0)) throw domain_error("magnetic field must be >= 0");
    return ens.zfs_hz - ens.gamma_hz_per_gauss * ens.projection_factor * b_gauss;
}

/// Field at which the mean spin transition is resonant with the given frequency.
inline double resonance_field(double frequency_hz, const SpinEnsembleParams& ens) {
    return (ens.zfs_hz - frequency_hz) / (ens.gamma_hz_per_gauss * ens.projection_factor);
}

/// Cavity pull g^2/delta of a single detuned spin.
inline double dispersive_shift_single(double g_hz, double delta_hz) {
    if (delta_hz == 0.0) throw domain_error("dispersive shift undefined at zero detuning");
    return g_hz * g_hz / delta_hz;
}

/// Cavity pull of a Gaussian-broadened ensemble: the principal-value average of g^2/delta
/// over the line, which is the Hilbert transform of the Gaussian and evaluates to
///   p N g^2 (sqrt2 / sigma) D((f_c - f_0) / (sqrt2 sigma)).
/// Finite at zero detuning; tends to p N g^2 / delta once |delta| >> sigma.
inline double ensemble_dispersive_shift(const SpinEnsembleParams& ens, double cavity_hz, double mean_spin_hz,
                                        double polarization) {
    if (!(polarization >= 0.0 && polarization <= 1.0))
        throw invalid_parameter("polarization must lie in [0, 1]");
    const double sigma = ens.linewidth_hz();
    if (!(sigma > 0) || !std::isfinite(sigma)) throw invalid_parameter("ensemble linewidth must be > 0");
    const double x = (cavity_hz - mean_spin_hz) / (std::numbers::sqrt2 * sigma);
    const double g2 = ens.coupling_hz * ens.coupling_hz;
    return polarization * ens.n_spins * g2 * (std::numbers::sqrt2 / sigma) * dawson(x);
}

/// Reflection phase arg(S11) of a one-port resonator,
///   4 beta Q x / ((2 Q x)^2 + 1 - beta^2) + k x + phi0,
/// with x the fractional probe detuning (f - f_c) / f_c.
inline double reflection_phase(const CavityParams& cav, double fractional_detuning) {
    cav.validate();
    const double x = fractional_detuning;
    const double two_qx = 2.0 * cav.quality_factor * x;
    return 4.0 * cav.beta * cav.quality_factor * x / (two_qx * two_qx + (1.0 - cav.beta * cav.beta)) +
           cav.phase_slope * x + cav.phase_offset;
}

/// First-order expansion of reflection_phase about x = 0.
inline double reflection_phase_linearized(const CavityParams& cav, double fractional_detuning) {
    cav.validate();
    return cav.resonant_slope() * fractional_detuning + cav.phase_offset;
}

/// Phase shift of a fully polarized ensemble in the optimized device, pi Q N g^2 / (w0 Delta).
/// The ratio g^2 / (w0 Delta) is the same in angular and ordinary frequency, so Hz are used as is.
inline double optimized_phase_shift(const OptimizedDeviceParams& p) {
    p.validate();
    return std::numbers::pi * p.quality_factor * p.n_spins * p.coupling_hz * p.coupling_hz /
           (p.spin_frequency_hz * p.detuning_hz);
}

struct PhotonBudget {
    double flux_per_s;          // N / T2
    double average_photons;     // 2 pi N Q / (w_c T2), w_c = 2 pi f_0
    double rabi_from_photons_hz;  // g sqrt(n), ordinary frequency
    double stated_rabi_hz;        // value quoted for comparison only; not derivable from the inputs
};

inline PhotonBudget photon_budget(const OptimizedDeviceParams& p) {
    p.validate();
    PhotonBudget b{};
    b.flux_per_s = p.n_spins / p.t2_s;
    // 2 pi N Q / (w_c T2) with w_c = 2 pi f_0; the 2 pi cancels.
    b.average_photons = p.n_spins * p.quality_factor / (p.spin_frequency_hz * p.t2_s);
    b.rabi_from_photons_hz = p.coupling_hz * std::sqrt(b.average_photons);
    b.stated_rabi_hz = 200.0;
    return b;
}

} // namespace dsr
