#pragma once

// Phase-noise synthesis, lock-in demodulation and readout sensitivity.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "dsr/constants.hpp"
#include "dsr/error.hpp"
#include "dsr/physics.hpp"

namespace dsr {

struct PsdSegment {
    double f_break_hz;
    double exponent;
    double level;  // rad^2/Hz at f_break_hz
};

/// One-sided phase-noise spectral density, piecewise power law S(f) = level (f / f_break)^exponent.
/// Segment i covers [f_break_i, f_break_{i+1}); the first one also extends down to f_min.
struct PhaseNoisePSD {
    double f_min_hz = 1.0;
    double f_max_hz = 1e6;
    std::vector<PsdSegment> segments;

    void validate() const {
        detail::require(std::isfinite(f_min_hz) && f_min_hz > 0, "f_min_hz", "PSD f_min must be > 0");
        detail::require(std::isfinite(f_max_hz) && f_max_hz > f_min_hz, "f_max_hz", "PSD f_max must exceed f_min");
        detail::require(!segments.empty(), "segments", "PSD needs at least one segment");
        const bool silent = segments.front().level == 0.0;
        for (std::size_t i = 0; i < segments.size(); ++i) {
            const auto& s = segments[i];
            detail::require(std::isfinite(s.f_break_hz) && s.f_break_hz > 0, "f_break_hz",
                            "PSD breakpoints must be > 0");
            detail::require(std::isfinite(s.exponent), "exponent", "PSD exponents must be finite");
            detail::require(std::isfinite(s.level) && s.level >= 0, "level_rad2_per_hz",
                            "PSD levels must be >= 0");
            // an all-zero PSD is the noiseless limit; otherwise every level is positive
            detail::require((s.level == 0.0) == silent, "level_rad2_per_hz",
                            "PSD levels must be all zero or all positive");
            if (i == 0) continue;
            const auto& prev = segments[i - 1];
            detail::require(s.f_break_hz > prev.f_break_hz, "f_break_hz", "PSD breakpoints must increase strictly");
            const double joined = prev.level * std::pow(s.f_break_hz / prev.f_break_hz, prev.exponent);
            detail::require(std::fabs(joined - s.level) <= 1e-6 * std::max(joined, s.level), "level_rad2_per_hz",
                            "PSD is discontinuous at a breakpoint");
        }
    }

    /// Builds a PSD whose segment levels are chained from `level_at_first_break` so that S is continuous.
    static PhaseNoisePSD continuous(double f_min, double f_max, double level_at_first_break,
                                    std::span<const std::pair<double, double>> breaks_and_exponents) {
        PhaseNoisePSD psd;
        psd.f_min_hz = f_min;
        psd.f_max_hz = f_max;
        double level = level_at_first_break;
        for (std::size_t i = 0; i < breaks_and_exponents.size(); ++i) {
            const auto [f, e] = breaks_and_exponents[i];
            if (i > 0) {
                const auto& prev = psd.segments.back();
                level = prev.level * std::pow(f / prev.f_break_hz, prev.exponent);
            }
            psd.segments.push_back({f, e, level});
        }
        psd.validate();
        return psd;
    }

    static PhaseNoisePSD white(double f_min, double f_max, double level) {
        const std::pair<double, double> seg{f_min, 0.0};
        return continuous(f_min, f_max, level, std::span(&seg, 1));
    }
};

inline double psd_value(const PhaseNoisePSD& psd, double f_hz) {
    if (!(f_hz >= psd.f_min_hz && f_hz <= psd.f_max_hz))
        throw domain_error("frequency outside the PSD range [f_min, f_max]");
    auto it = std::upper_bound(psd.segments.begin(), psd.segments.end(), f_hz,
                               [](double f, const PsdSegment& s) { return f < s.f_break_hz; });
    const auto& s = it == psd.segments.begin() ? psd.segments.front() : *std::prev(it);
    return s.level * std::pow(f_hz / s.f_break_hz, s.exponent);
}

namespace detail {

struct fftw_plan_deleter {
    void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};
using unique_fftw_plan = std::unique_ptr<fftw_plan_s, fftw_plan_deleter>;

} // namespace detail

/// Gaussian phase noise with one-sided spectral density `psd`, sampled at fs.
///
/// Each positive-frequency bin k receives a complex unit normal scaled by
/// sqrt(S(f_k) fs n / 2); the Nyquist bin is real; DC and bins below f_min are zero.
/// The inverse DFT (normalized by 1/n) of the Hermitian spectrum gives the series.
/// Deterministic for a given seed. FFTW planning is not thread-safe, so concurrent
/// callers must serialize.
inline std::vector<double> synthesize_phase_noise(const PhaseNoisePSD& psd, double fs_hz, std::size_t n_samples,
                                                  std::uint64_t seed) {
    psd.validate();
    if (!(fs_hz > 0)) throw invalid_parameter("fs_hz", "sample rate must be > 0");
    if (fs_hz / 2.0 > psd.f_max_hz) throw invalid_parameter("fs_hz", "Nyquist frequency exceeds PSD f_max");
    if (n_samples < 2) throw invalid_parameter("n_samples", "need at least two samples");

    const std::size_t n = n_samples;
    const std::size_t n_bins = n / 2 + 1;
    std::vector<std::complex<double>> spectrum(n_bins, {0.0, 0.0});
    std::vector<double> out(n, 0.0);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double df = fs_hz / static_cast<double>(n);
    for (std::size_t k = 1; k < n_bins; ++k) {
        const bool nyquist = (n % 2 == 0) && k == n / 2;
        const double a = normal(rng);
        const double b = nyquist ? 0.0 : normal(rng);
        const double f = static_cast<double>(k) * df;
        if (f < psd.f_min_hz) continue;
        const double scale = std::sqrt(psd_value(psd, f) * fs_hz * static_cast<double>(n) / 2.0);
        spectrum[k] = nyquist ? std::complex<double>(scale * a, 0.0)
                              : std::complex<double>(scale * a, scale * b) / std::numbers::sqrt2;
    }

    detail::unique_fftw_plan plan(fftw_plan_dft_c2r_1d(static_cast<int>(n),
                                                       reinterpret_cast<fftw_complex*>(spectrum.data()),
                                                       out.data(), FFTW_ESTIMATE));
    fftw_execute(plan.get());
    const double inv_n = 1.0 / static_cast<double>(n);
    for (auto& v : out) v *= inv_n;
    return out;
}

struct LockinConfig {
    double f_mod_hz = 1e4;
    double fs_hz = 1e6;
    double duration_s = 0.01;

    void validate() const {
        detail::require(std::isfinite(f_mod_hz) && f_mod_hz > 0, "f_mod_hz", "lock-in modulation frequency must be > 0");
        detail::require(std::isfinite(fs_hz) && fs_hz > 10 * f_mod_hz, "fs_hz",
                        "lock-in sample rate must exceed 10 f_mod");
        detail::require(std::isfinite(duration_s) && duration_s > 0, "duration_s", "lock-in duration must be > 0");
        const double cycles = duration_s * f_mod_hz;
        detail::require(std::fabs(cycles - std::round(cycles)) <= 1e-9 * std::max(1.0, cycles) && cycles >= 1,
                        "duration_s", "lock-in duration must span an integer number of modulation periods");
    }

    std::size_t n_samples() const { return static_cast<std::size_t>(std::llround(fs_hz * duration_s)); }
};

struct LockinOutput {
    double in_phase;    // 2 <s(t) sin(2 pi f t)>
    double quadrature;  // 2 <s(t) cos(2 pi f t)>
};

inline LockinOutput lockin_demodulate_iq(std::span<const double> signal, const LockinConfig& cfg) {
    cfg.validate();
    if (signal.size() != cfg.n_samples()) throw length_mismatch("signal length differs from fs * duration");
    double si = 0.0;
    double sq = 0.0;
    const double w = constants::two_pi * cfg.f_mod_hz / cfg.fs_hz;
    for (std::size_t j = 0; j < signal.size(); ++j) {
        const double arg = w * static_cast<double>(j);
        si += signal[j] * std::sin(arg);
        sq += signal[j] * std::cos(arg);
    }
    const double norm = 2.0 / static_cast<double>(signal.size());
    return {si * norm, sq * norm};
}

/// Amplitude of the component in phase with sin(2 pi f_mod t). An in-phase sinusoid of amplitude A
/// returns A; a +-A square wave returns 4A/pi (up to sampling).
inline double lockin_demodulate(std::span<const double> signal, const LockinConfig& cfg) {
    return lockin_demodulate_iq(signal, cfg).in_phase;
}

/// Square wave sign(sin(2 pi f_mod t)): +1 on the first half of each period, -1 on the second,
/// 0 on the nodes of the sine. The zero nodes keep the wave orthogonal to the cosine reference.
inline std::vector<double> square_wave(const LockinConfig& cfg) {
    const std::size_t n = cfg.n_samples();
    std::vector<double> out(n);
    const double samples_per_period = cfg.fs_hz / cfg.f_mod_hz;
    const auto m = static_cast<std::size_t>(std::llround(samples_per_period));
    if (std::fabs(samples_per_period - static_cast<double>(m)) < 1e-9) {
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t r = j % m;
            out[j] = (r == 0 || 2 * r == m) ? 0.0 : (2 * r < m ? 1.0 : -1.0);
        }
        return out;
    }
    const double w = constants::two_pi * cfg.f_mod_hz / cfg.fs_hz;
    for (std::size_t j = 0; j < n; ++j) {
        const double s = std::sin(w * static_cast<double>(j));
        out[j] = s > 0 ? 1.0 : (s < 0 ? -1.0 : 0.0);
    }
    return out;
}

/// In-phase lock-in gain of the sampled square wave; tends to 4/pi as fs/f_mod grows.
inline double square_wave_gain(const LockinConfig& cfg) {
    return lockin_demodulate(square_wave(cfg), cfg);
}

/// Phase change per tesla for the optimized device: the full dispersive phase times the
/// spin precession angle g_e mu_B T2 / hbar accumulated per unit field.
inline double phase_to_field_slope(const OptimizedDeviceParams& p) {
    return optimized_phase_shift(p) * constants::nv_g_factor * constants::bohr_magneton * p.t2_s / constants::hbar;
}

/// Field sensitivity (T/sqrt(Hz)) limited by phase noise of amplitude density s_phi_sqrt at f:
///   eta = hbar / (g_e mu_B T2) * (w0 Delta) / (pi Q g^2 N) * S_phi^{1/2}(f).
/// The leading g is the electron g-factor; the squared g is the spin-cavity coupling.
inline double sensitivity(const OptimizedDeviceParams& p, double s_phi_sqrt, double f_hz) {
    p.validate();
    if (!(s_phi_sqrt >= 0) || !std::isfinite(s_phi_sqrt))
        throw invalid_parameter("s_phi_sqrt", "phase noise amplitude density must be >= 0");
    if (!(f_hz > 0)) throw invalid_parameter("f_hz", "modulation frequency must be > 0");
    // w0 Delta / g^2 is unchanged by the 2 pi between angular and ordinary frequency
    const double spin_term = constants::hbar / (constants::nv_g_factor * constants::bohr_magneton * p.t2_s);
    const double cavity_term = p.spin_frequency_hz * p.detuning_hz /
                               (std::numbers::pi * p.quality_factor * p.coupling_hz * p.coupling_hz * p.n_spins);
    return spin_term * cavity_term * s_phi_sqrt;
}

inline constexpr double optical_readout_penalty = 150.0;

struct ShotNoiseLimit {
    double spin_projection;   // T/sqrt(Hz)
    double optical_estimate;  // optical_readout_penalty x spin_projection
};

/// Spin projection noise limit hbar / (g_e mu_B sqrt(N T2)).
inline ShotNoiseLimit shot_noise_limit(double n_spins, double t2_s) {
    if (!(n_spins > 0) || !(t2_s > 0)) throw invalid_parameter("n_spins", "n_spins and t2 must be > 0");
    const double eta = constants::hbar / (constants::nv_g_factor * constants::bohr_magneton * std::sqrt(n_spins * t2_s));
    return {eta, optical_readout_penalty * eta};
}

struct ReadoutEstimate {
    double estimated_amplitude;  // in-phase lock-in output, rad; (4/pi) x signal amplitude when noiseless
    double noise_floor;          // |quadrature| sqrt(duration), rad/sqrt(Hz); its mean square is S_phi(f_mod)
};

/// One lock-in readout: square-wave modulated dispersive phase plus synthesized phase noise.
inline ReadoutEstimate simulate_readout(const OptimizedDeviceParams& p, const PhaseNoisePSD& psd,
                                        const LockinConfig& cfg, double signal_phase, std::uint64_t seed) {
    p.validate();
    cfg.validate();
    const std::size_t n = cfg.n_samples();
    auto signal = synthesize_phase_noise(psd, cfg.fs_hz, n, seed);
    const auto square = square_wave(cfg);
    for (std::size_t j = 0; j < n; ++j) signal[j] += signal_phase * square[j];
    const auto iq = lockin_demodulate_iq(signal, cfg);
    return {iq.in_phase, std::fabs(iq.quadrature) * std::sqrt(cfg.duration_s)};
}

} // namespace dsr
