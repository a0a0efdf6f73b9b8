#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dsr/dynamics.hpp"
#include "dsr/error.hpp"
#include "dsr/noise.hpp"
#include "dsr/physics.hpp"

namespace dsr {

/// Configuration problem with the file and line it came from (line 0 when unknown).
class config_error : public invalid_parameter {
public:
    config_error(const std::string& source, int line, const std::string& path, const std::string& what)
        : invalid_parameter(path, format(source, line, path, what)), line_(line) {}
    int line() const noexcept { return line_; }

private:
    static std::string format(const std::string& source, int line, const std::string& path, const std::string& what) {
        std::string s = source;
        if (line > 0) s += ":" + std::to_string(line);
        s += ": ";
        if (!path.empty()) s += path + ": ";
        return s + what;
    }
    int line_;
};

struct ReadoutSettings {
    std::vector<double> b_fields_gauss{32.0};
    double p_sat = 1.0;
    bool subtract_offset = true;  // traces are shown offset-free, as in the measurement
    bool linearized = true;

    void validate() const {
        detail::require(!b_fields_gauss.empty(), "b_fields_gauss", "need at least one field value");
        for (double b : b_fields_gauss)
            detail::require(std::isfinite(b) && b >= 0, "b_fields_gauss", "field values must be >= 0");
        detail::require(p_sat >= 0 && p_sat <= 1, "p_sat", "saturation polarization must lie in [0, 1]");
    }
};

struct RunConfig {
    SpinEnsembleParams ensemble;
    CavityParams cavity;
    ChopperCycle cycle;
    PhaseNoisePSD psd = PhaseNoisePSD::white(1.0, 1e6, 1e-12);
    LockinConfig lockin;
    OptimizedDeviceParams device;
    ReadoutSettings readout;
    std::uint64_t seed = 0;
    std::string output_dir = ".";
};

namespace detail {

/// Line number of every object key in a JSON text, addressed as a.b[2].c
inline std::map<std::string, int> json_key_lines(std::string_view text) {
    struct Frame {
        bool is_array;
        std::string path;
        std::size_t index = 0;
        std::string key;
        bool expect_key = true;
    };
    std::map<std::string, int> lines;
    std::vector<Frame> stack;
    int line = 1;
    auto value_path = [&]() -> std::string {
        if (stack.empty()) return "";
        const auto& f = stack.back();
        if (f.is_array) return f.path + "[" + std::to_string(f.index) + "]";
        return f.path.empty() ? f.key : f.path + "." + f.key;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '\n') {
            ++line;
        } else if (c == '{' || c == '[') {
            stack.push_back({c == '[', value_path(), 0, {}, true});
        } else if (c == '}' || c == ']') {
            if (!stack.empty()) stack.pop_back();
        } else if (c == ',') {
            if (!stack.empty()) {
                if (stack.back().is_array)
                    ++stack.back().index;
                else
                    stack.back().expect_key = true;
            }
        } else if (c == '"') {
            std::string s;
            for (++i; i < text.size() && text[i] != '"'; ++i) {
                if (text[i] == '\\' && i + 1 < text.size()) ++i;
                s += text[i];
            }
            if (!stack.empty() && !stack.back().is_array && stack.back().expect_key) {
                stack.back().key = s;
                stack.back().expect_key = false;
                lines.emplace(value_path(), line);
            }
        }
    }
    return lines;
}

class ConfigReader {
public:
    ConfigReader(std::string_view text, std::string source) : source_(std::move(source)) {
        try {
            root_ = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            const auto upto = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
            const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + upto, '\n'));
            throw config_error(source_, line, "", "JSON syntax error");
        }
        lines_ = json_key_lines(text);
    }

    const nlohmann::json& root() const { return root_; }
    const std::string& source() const { return source_; }

    int line_of(const std::string& path) const {
        const auto it = lines_.find(path);
        return it == lines_.end() ? 0 : it->second;
    }

    /// Best line for a validation failure on `field` somewhere under `prefix`.
    int locate(const std::string& prefix, const std::string& field) const {
        if (const int l = line_of(prefix.empty() ? field : prefix + "." + field)) return l;
        for (const auto& [path, l] : lines_)
            if (path.starts_with(prefix) && path.ends_with("." + field)) return l;
        return line_of(prefix);
    }

    [[noreturn]] void fail(const std::string& path, const std::string& what) const {
        throw config_error(source_, line_of(path), path, what);
    }

    void check_object(const nlohmann::json& j, const std::string& path) const {
        if (!j.is_object()) fail(path, "expected a JSON object");
    }

    void reject_unknown(const nlohmann::json& j, const std::string& path, std::initializer_list<const char*> known) const {
        for (const auto& [key, _] : j.items()) {
            const bool ok = std::any_of(known.begin(), known.end(), [&](const char* k) { return key == k; });
            if (!ok) fail(join(path, key), "unknown key '" + key + "'");
        }
    }

    void read(const nlohmann::json& j, const std::string& path, const char* key, double& out) const {
        if (!j.contains(key)) return;
        const auto& v = j.at(key);
        if (!v.is_number()) fail(join(path, key), "expected a number");
        out = v.get<double>();
    }

    void read(const nlohmann::json& j, const std::string& path, const char* key, int& out) const {
        if (!j.contains(key)) return;
        const auto& v = j.at(key);
        if (!v.is_number_integer()) fail(join(path, key), "expected an integer");
        out = v.get<int>();
    }

    void read(const nlohmann::json& j, const std::string& path, const char* key, std::uint64_t& out) const {
        if (!j.contains(key)) return;
        const auto& v = j.at(key);
        if (!v.is_number_unsigned()) fail(join(path, key), "expected a non-negative integer");
        out = v.get<std::uint64_t>();
    }

    void read(const nlohmann::json& j, const std::string& path, const char* key, bool& out) const {
        if (!j.contains(key)) return;
        const auto& v = j.at(key);
        if (!v.is_boolean()) fail(join(path, key), "expected true or false");
        out = v.get<bool>();
    }

    void read(const nlohmann::json& j, const std::string& path, const char* key, std::string& out) const {
        if (!j.contains(key)) return;
        const auto& v = j.at(key);
        if (!v.is_string()) fail(join(path, key), "expected a string");
        out = v.get<std::string>();
    }

    void read(const nlohmann::json& j, const std::string& path, const char* key, std::vector<double>& out) const {
        if (!j.contains(key)) return;
        const auto& v = j.at(key);
        const auto p = join(path, key);
        if (v.is_number()) {
            out = {v.get<double>()};
            return;
        }
        if (!v.is_array()) fail(p, "expected a number or an array of numbers");
        out.clear();
        for (const auto& e : v) {
            if (!e.is_number()) fail(p, "expected an array of numbers");
            out.push_back(e.get<double>());
        }
    }

    /// Runs obj.validate() and maps a failure to the offending key.
    template <class T>
    void validate(const T& obj, const std::string& path) const {
        try {
            obj.validate();
        } catch (const invalid_parameter& e) {
            const std::string field = e.field();
            throw config_error(source_, locate(path, field), field.empty() ? path : join(path, field), e.what());
        }
    }

    static std::string join(const std::string& path, const std::string& key) {
        return path.empty() ? key : path + "." + key;
    }

private:
    std::string source_;
    nlohmann::json root_;
    std::map<std::string, int> lines_;
};

inline std::string read_text_file(const std::filesystem::path& path, const char* what) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw config_error(path.string(), 0, "", std::string("cannot open ") + what);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline PhaseNoisePSD read_psd(const ConfigReader& r, const nlohmann::json& j, const std::string& path) {
    r.check_object(j, path);
    r.reject_unknown(j, path, {"f_min_hz", "f_max_hz", "segments"});
    PhaseNoisePSD psd;
    r.read(j, path, "f_min_hz", psd.f_min_hz);
    r.read(j, path, "f_max_hz", psd.f_max_hz);
    const auto seg_path = ConfigReader::join(path, "segments");
    if (!j.contains("segments")) r.fail(path, "missing 'segments'");
    if (!j.at("segments").is_array()) r.fail(seg_path, "expected an array of segments");
    std::size_t i = 0;
    for (const auto& s : j.at("segments")) {
        const auto p = seg_path + "[" + std::to_string(i++) + "]";
        r.check_object(s, p);
        r.reject_unknown(s, p, {"f_break_hz", "exponent", "level_rad2_per_hz"});
        for (const char* k : {"f_break_hz", "exponent", "level_rad2_per_hz"})
            if (!s.contains(k)) r.fail(p, std::string("missing '") + k + "'");
        PsdSegment seg{};
        r.read(s, p, "f_break_hz", seg.f_break_hz);
        r.read(s, p, "exponent", seg.exponent);
        r.read(s, p, "level_rad2_per_hz", seg.level);
        psd.segments.push_back(seg);
    }
    r.validate(psd, path);
    return psd;
}

} // namespace detail

inline PhaseNoisePSD parse_psd(std::string_view text, const std::string& source = "<psd>") {
    const detail::ConfigReader r(text, source);
    return detail::read_psd(r, r.root(), "");
}

inline PhaseNoisePSD load_psd(const std::filesystem::path& path) {
    return parse_psd(detail::read_text_file(path, "PSD file"), path.string());
}

/// Parses a run configuration. Every section is optional; a relative PSD file path is
/// resolved against `base_dir`.
inline RunConfig parse_config(std::string_view text, const std::string& source = "<config>",
                              const std::filesystem::path& base_dir = ".") {
    const detail::ConfigReader r(text, source);
    const auto& j = r.root();
    r.check_object(j, "");
    r.reject_unknown(j, "",
                     {"ensemble", "cavity", "cycle", "psd", "lockin", "device", "readout", "seed", "output_dir"});
    RunConfig cfg;
    r.read(j, "", "seed", cfg.seed);
    r.read(j, "", "output_dir", cfg.output_dir);

    if (j.contains("ensemble")) {
        const auto& s = j.at("ensemble");
        r.check_object(s, "ensemble");
        r.reject_unknown(s, "ensemble",
                         {"n_spins", "coupling_hz", "zfs_hz", "gamma_hz_per_gauss", "projection_factor", "t2_star_s",
                          "t1_dark_s", "t1_light_s"});
        auto& e = cfg.ensemble;
        r.read(s, "ensemble", "n_spins", e.n_spins);
        r.read(s, "ensemble", "coupling_hz", e.coupling_hz);
        r.read(s, "ensemble", "zfs_hz", e.zfs_hz);
        r.read(s, "ensemble", "gamma_hz_per_gauss", e.gamma_hz_per_gauss);
        r.read(s, "ensemble", "projection_factor", e.projection_factor);
        r.read(s, "ensemble", "t2_star_s", e.t2_star_s);
        r.read(s, "ensemble", "t1_dark_s", e.t1_dark_s);
        r.read(s, "ensemble", "t1_light_s", e.t1_light_s);
    }
    r.validate(cfg.ensemble, "ensemble");

    if (j.contains("cavity")) {
        const auto& s = j.at("cavity");
        r.check_object(s, "cavity");
        r.reject_unknown(s, "cavity",
                         {"resonance_hz", "quality_factor", "beta", "phase_slope", "phase_offset", "beta_exclusion"});
        auto& c = cfg.cavity;
        r.read(s, "cavity", "resonance_hz", c.resonance_hz);
        r.read(s, "cavity", "quality_factor", c.quality_factor);
        r.read(s, "cavity", "beta", c.beta);
        r.read(s, "cavity", "phase_slope", c.phase_slope);
        r.read(s, "cavity", "phase_offset", c.phase_offset);
        r.read(s, "cavity", "beta_exclusion", c.beta_exclusion);
    }
    r.validate(cfg.cavity, "cavity");

    if (j.contains("cycle")) {
        const auto& s = j.at("cycle");
        r.check_object(s, "cycle");
        r.reject_unknown(s, "cycle", {"period_s", "duty", "n_periods", "dt_s"});
        r.read(s, "cycle", "period_s", cfg.cycle.period_s);
        r.read(s, "cycle", "duty", cfg.cycle.duty);
        r.read(s, "cycle", "n_periods", cfg.cycle.n_periods);
        r.read(s, "cycle", "dt_s", cfg.cycle.dt_s);
    }
    r.validate(cfg.cycle, "cycle");

    if (j.contains("psd")) {
        const auto& s = j.at("psd");
        if (s.is_string()) {
            std::filesystem::path p = s.get<std::string>();
            if (p.is_relative()) p = base_dir / p;
            std::string text;
            try {
                text = detail::read_text_file(p, "PSD file");
            } catch (const config_error&) {
                r.fail("psd", "cannot open PSD file " + p.string());
            }
            cfg.psd = parse_psd(text, p.string());
        } else {
            cfg.psd = detail::read_psd(r, s, "psd");
        }
    }

    if (j.contains("lockin")) {
        const auto& s = j.at("lockin");
        r.check_object(s, "lockin");
        r.reject_unknown(s, "lockin", {"f_mod_hz", "fs_hz", "duration_s"});
        r.read(s, "lockin", "f_mod_hz", cfg.lockin.f_mod_hz);
        r.read(s, "lockin", "fs_hz", cfg.lockin.fs_hz);
        r.read(s, "lockin", "duration_s", cfg.lockin.duration_s);
    }
    r.validate(cfg.lockin, "lockin");

    if (j.contains("device")) {
        const auto& s = j.at("device");
        r.check_object(s, "device");
        r.reject_unknown(s, "device",
                         {"coupling_hz", "spin_frequency_hz", "quality_factor", "detuning_hz", "t2_s", "n_spins"});
        auto& d = cfg.device;
        r.read(s, "device", "coupling_hz", d.coupling_hz);
        r.read(s, "device", "spin_frequency_hz", d.spin_frequency_hz);
        r.read(s, "device", "quality_factor", d.quality_factor);
        r.read(s, "device", "detuning_hz", d.detuning_hz);
        r.read(s, "device", "t2_s", d.t2_s);
        r.read(s, "device", "n_spins", d.n_spins);
    }
    r.validate(cfg.device, "device");

    if (j.contains("readout")) {
        const auto& s = j.at("readout");
        r.check_object(s, "readout");
        r.reject_unknown(s, "readout", {"b_fields_gauss", "p_sat", "subtract_offset", "linearized"});
        r.read(s, "readout", "b_fields_gauss", cfg.readout.b_fields_gauss);
        r.read(s, "readout", "p_sat", cfg.readout.p_sat);
        r.read(s, "readout", "subtract_offset", cfg.readout.subtract_offset);
        r.read(s, "readout", "linearized", cfg.readout.linearized);
    }
    r.validate(cfg.readout, "readout");
    return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    return parse_config(detail::read_text_file(path, "config file"), path.string(), path.parent_path());
}

} // namespace dsr
