#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dsr/config.hpp"
#include "dsr/dynamics.hpp"
#include "dsr/io.hpp"
#include "dsr/models.hpp"
#include "dsr/noise.hpp"
#include "dsr/physics.hpp"

namespace dsr {

/// n points from a to b inclusive; a single point sits at a.
inline std::vector<double> linear_grid(double a, double b, int n) {
    if (n < 1) throw invalid_parameter("points", "need at least one point");
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[i] = n == 1 ? a : a + (b - a) * i / (n - 1);
    if (n > 1) v.back() = b;
    return v;
}

inline std::vector<double> log_grid(double a, double b, int n) {
    if (!(a > 0) || !(b > 0)) throw invalid_parameter("f_min", "log-spaced range needs positive bounds");
    auto v = linear_grid(std::log10(a), std::log10(b), n);
    for (auto& e : v) e = std::pow(10.0, e);
    return v;
}

/// Cavity shift of the ensemble at the first configured field, with saturated polarization.
inline double configured_shift(const RunConfig& cfg) {
    const double spin_hz = transition_frequency(cfg.readout.b_fields_gauss.front(), cfg.ensemble);
    return ensemble_dispersive_shift(cfg.ensemble, cfg.cavity.resonance_hz, spin_hz, cfg.readout.p_sat);
}

/// Reflection phase against probe detuning from the bare resonance, with the cavity pulled by the spins.
/// Columns: detuning_hz, phase_rad.
inline Table cmd_spectrum(const RunConfig& cfg, std::optional<double> min_hz = {}, std::optional<double> max_hz = {},
                          int n_points = 201) {
    const double fc = cfg.cavity.resonance_hz;
    const double half_span = 5.0 * fc / cfg.cavity.quality_factor;
    const auto det = linear_grid(min_hz.value_or(-half_span), max_hz.value_or(half_span), n_points);
    const double pulled = fc + configured_shift(cfg);
    std::vector<double> phase;
    phase.reserve(det.size());
    for (double d : det) phase.push_back(reflection_phase(cfg.cavity, (fc + d - pulled) / pulled));
    Table t;
    t.add("detuning_hz", det);
    t.add("phase_rad", std::move(phase));
    return t;
}

inline PhaseTrace relaxation_trace(const RunConfig& cfg, double b_gauss) {
    const auto p = polarization_trace(cfg.cycle, cfg.ensemble, cfg.readout.p_sat, 0.0);
    return phase_trace(p, cfg.ensemble, cfg.cavity, b_gauss, cfg.readout.subtract_offset, cfg.readout.linearized);
}

/// One (time_s, phase_rad) table per configured field.
inline std::vector<std::pair<double, Table>> cmd_relaxation(const RunConfig& cfg) {
    std::vector<std::pair<double, Table>> out;
    for (double b : cfg.readout.b_fields_gauss) {
        auto tr = relaxation_trace(cfg, b);
        Table t;
        t.add("time_s", std::move(tr.times));
        t.add("phase_rad", std::move(tr.phase));
        out.emplace_back(b, std::move(t));
    }
    return out;
}

inline std::string field_label(double b_gauss) { return "B" + format_double(b_gauss); }

/// Time on the first column, one phase column per field (phase_rad_B<field>).
inline Table cmd_relaxation_map(const RunConfig& cfg) {
    Table t;
    for (double b : cfg.readout.b_fields_gauss) {
        auto tr = relaxation_trace(cfg, b);
        if (t.columns.empty()) t.add("time_s", std::move(tr.times));
        t.add("phase_rad_" + field_label(b), std::move(tr.phase));
    }
    return t;
}

/// Dispersive phase at saturated polarization, relative to the bare cavity. Columns: b_gauss, phase_rad.
inline Table cmd_shift_vs_field(const RunConfig& cfg, double b_min = 28.0, double b_max = 38.5, int n_points = 106) {
    const auto b = linear_grid(b_min, b_max, n_points);
    std::vector<double> phase;
    phase.reserve(b.size());
    const auto& cav = cfg.cavity;
    for (double v : b) {
        const double shift = ensemble_dispersive_shift(cfg.ensemble, cav.resonance_hz,
                                                       transition_frequency(v, cfg.ensemble), cfg.readout.p_sat);
        const double x = probe_detuning(cav, shift);
        phase.push_back(cfg.readout.linearized ? cav.resonant_slope() * x
                                               : reflection_phase(cav, x) - reflection_phase(cav, 0.0));
    }
    Table t;
    t.add("b_gauss", b);
    t.add("phase_rad", std::move(phase));
    return t;
}

/// Phase-noise-limited sensitivity of the optimized device over modulation frequency, with the
/// spin projection and optical reference levels. Columns in Hz and T/sqrt(Hz).
inline Table cmd_sensitivity(const RunConfig& cfg, std::optional<double> f_min = {}, std::optional<double> f_max = {},
                             int n_points = 61) {
    const auto f = log_grid(f_min.value_or(cfg.psd.f_min_hz), f_max.value_or(cfg.psd.f_max_hz), n_points);
    const auto limit = shot_noise_limit(cfg.device.n_spins, cfg.device.t2_s);
    std::vector<double> eta, shot, optical;
    for (double v : f) {
        eta.push_back(sensitivity(cfg.device, std::sqrt(psd_value(cfg.psd, v)), v));
        shot.push_back(limit.spin_projection);
        optical.push_back(limit.optical_estimate);
    }
    Table t;
    t.add("f_hz", f);
    t.add("eta_t_per_rthz", std::move(eta));
    t.add("shot_noise_t_per_rthz", std::move(shot));
    t.add("optical_t_per_rthz", std::move(optical));
    return t;
}

/// Synthetic phase noise sampled at the lock-in rate. Columns: time_s, phase_rad.
inline Table cmd_noise(const RunConfig& cfg, std::size_t n_samples) {
    auto phase = synthesize_phase_noise(cfg.psd, cfg.lockin.fs_hz, n_samples, cfg.seed);
    std::vector<double> t(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) t[i] = static_cast<double>(i) / cfg.lockin.fs_hz;
    Table out;
    out.add("time_s", std::move(t));
    out.add("phase_rad", std::move(phase));
    return out;
}

struct FitRequest {
    std::string model;                   // reflection, exponential or shift_vs_field
    nlohmann::json init = nlohmann::json::object();  // parameter name -> starting value
    std::optional<double> from, to;      // window on the x column
    std::string x_column;                // defaults to the first column
    std::string y_column;                // defaults to the second column
    FitOptions options;
};

namespace detail {

inline double init_value(const nlohmann::json& init, const char* name, double fallback) {
    if (!init.contains(name)) return fallback;
    const auto& v = init.at(name);
    if (!v.is_number()) throw invalid_parameter(name, std::string("initial value for '") + name + "' must be a number");
    return v.get<double>();
}

inline void reject_unknown_init(const nlohmann::json& init, std::initializer_list<const char*> names) {
    if (!init.is_object()) throw invalid_parameter("init", "initial values must be a JSON object");
    for (const auto& [key, _] : init.items())
        if (std::none_of(names.begin(), names.end(), [&](const char* n) { return key == n; }))
            throw invalid_parameter(key, "unknown parameter '" + key + "' in initial values");
}

} // namespace detail

/// Fits one of the three models to two columns of a table. Reflection data are read as
/// detuning in Hz and converted to fractional detuning with the configured resonance;
/// exponential data are timed from the first sample inside the window.
inline FitResult cmd_fit(const RunConfig& cfg, const Table& data, const FitRequest& req) {
    if (data.columns.size() < 2) throw invalid_parameter("input", "need at least two columns");
    const auto& xs = req.x_column.empty() ? data.data[0] : data.column(req.x_column);
    const auto& ys = req.y_column.empty() ? data.data[1] : data.column(req.y_column);
    std::vector<double> x, y;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (req.from && xs[i] < *req.from) continue;
        if (req.to && xs[i] > *req.to) continue;
        x.push_back(xs[i]);
        y.push_back(ys[i]);
    }
    if (x.empty()) throw invalid_parameter("from", "no data inside the fit window");
    const auto& init = req.init;

    if (req.model == "reflection") {
        detail::reject_unknown_init(init, {"Q", "beta", "k", "phi0"});
        for (auto& v : x) v /= cfg.cavity.resonance_hz;
        const ReflectionInit p0{detail::init_value(init, "Q", cfg.cavity.quality_factor),
                                detail::init_value(init, "beta", cfg.cavity.beta),
                                detail::init_value(init, "k", 0.0), detail::init_value(init, "phi0", 0.0)};
        return fit_reflection_phase(x, y, p0, {}, req.options);
    }
    if (req.model == "exponential") {
        detail::reject_unknown_init(init, {"amplitude", "tau", "offset"});
        const double t0 = x.front();
        for (auto& v : x) v -= t0;
        const ExponentialInit p0{detail::init_value(init, "amplitude", y.front() - y.back()),
                                 detail::init_value(init, "tau", std::max(x.back(), 1e-12) / 3.0),
                                 detail::init_value(init, "offset", y.back())};
        return fit_exponential(x, y, p0, {}, req.options);
    }
    if (req.model == "shift_vs_field") {
        detail::reject_unknown_init(init, {"n_spins", "t2_star_s"});
        ShiftFieldSetup setup;
        setup.ensemble = cfg.ensemble;
        setup.cavity = cfg.cavity;
        setup.polarization = cfg.readout.p_sat;
        const ShiftFieldInit p0{detail::init_value(init, "n_spins", cfg.ensemble.n_spins),
                                detail::init_value(init, "t2_star_s", cfg.ensemble.t2_star_s)};
        return fit_shift_vs_field(x, y, setup, p0, req.options);
    }
    throw invalid_parameter("model", "unknown model '" + req.model + "' (reflection, exponential, shift_vs_field)");
}

} // namespace dsr
