// dsr: reproduce the dispersive spin readout figures as CSV/JSON files.
//
// Exit codes: 0 success, 1 other failure, 2 configuration or usage error,
// 3 fit did not converge (the report is still written).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "dsr/commands.hpp"
#include "dsr/config.hpp"
#include "dsr/io.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int exit_other = 1;
constexpr int exit_config = 2;
constexpr int exit_not_converged = 3;

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path, "JSON run configuration (defaults are used when omitted)");
    cmd->add_option("--seed", c.seed, "random seed, overrides the configuration");
    cmd->add_option("--out", c.out_dir, "output directory, overrides the configuration");
}

dsr::RunConfig load(const Common& c) {
    dsr::RunConfig cfg = c.config_path.empty() ? dsr::RunConfig{} : dsr::load_config(c.config_path);
    if (c.seed) cfg.seed = *c.seed;
    if (!c.out_dir.empty()) cfg.output_dir = c.out_dir;
    return cfg;
}

fs::path output_path(const dsr::RunConfig& cfg, const std::string& name) {
    const fs::path dir = cfg.output_dir.empty() ? fs::path(".") : fs::path(cfg.output_dir);
    fs::create_directories(dir);
    return dir / name;
}

void emit(const dsr::RunConfig& cfg, const std::string& name, const dsr::Table& t) {
    const auto path = output_path(cfg, name);
    dsr::write_csv_file(path.string(), t);
    std::cout << path.string() << '\n';
}

nlohmann::json read_init(const std::string& arg) {
    if (arg.empty()) return nlohmann::json::object();
    std::string text = arg;
    if (arg.front() != '{') {
        std::ifstream is(arg, std::ios::binary);
        if (!is) throw dsr::invalid_parameter("init", "cannot open " + arg);
        std::ostringstream ss;
        ss << is.rdbuf();
        text = ss.str();
    }
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw dsr::invalid_parameter("init", std::string("initial values are not valid JSON: ") + e.what());
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dispersive spin readout simulator"};
    app.require_subcommand(1);

    Common spectrum_c, relax_c, shift_c, sens_c, fit_c, noise_c;
    std::optional<double> lo, hi;
    int points = 0;
    bool map = false;
    std::size_t samples = 65536;
    std::string input, model, init_arg, x_col, y_col;
    std::optional<double> from, to;

    auto* spectrum = app.add_subcommand("spectrum", "reflection phase against probe detuning");
    add_common(spectrum, spectrum_c);
    spectrum->add_option("--min", lo, "lowest detuning in Hz (default -5 linewidths)");
    spectrum->add_option("--max", hi, "highest detuning in Hz (default +5 linewidths)");
    spectrum->add_option("--points", points, "number of points (default 201)")->check(CLI::PositiveNumber);

    auto* relax = app.add_subcommand("relaxation", "phase trace over the chopper cycle, per configured field");
    add_common(relax, relax_c);
    relax->add_flag("--map", map, "one file with a column per field");

    auto* shift = app.add_subcommand("shift-vs-field", "dispersive phase at saturated polarization against field");
    add_common(shift, shift_c);
    shift->add_option("--min", lo, "lowest field in gauss (default 28)");
    shift->add_option("--max", hi, "highest field in gauss (default 38.5)");
    shift->add_option("--points", points, "number of points (default 106)")->check(CLI::PositiveNumber);

    auto* sens = app.add_subcommand("sensitivity", "phase-noise-limited field sensitivity of the optimized device");
    add_common(sens, sens_c);
    sens->add_option("--min", lo, "lowest modulation frequency in Hz (default PSD f_min)");
    sens->add_option("--max", hi, "highest modulation frequency in Hz (default PSD f_max)");
    sens->add_option("--points", points, "number of log-spaced points (default 61)")->check(CLI::PositiveNumber);

    auto* fit = app.add_subcommand("fit", "fit a model to a CSV file and write fit_report.json");
    add_common(fit, fit_c);
    fit->add_option("--input", input, "CSV file")->required();
    fit->add_option("--model", model, "reflection, exponential or shift_vs_field")
        ->required()
        ->check(CLI::IsMember({"reflection", "exponential", "shift_vs_field"}));
    fit->add_option("--init", init_arg, "initial values: JSON file or inline JSON object");
    fit->add_option("--from", from, "lower end of the window on the x column");
    fit->add_option("--to", to, "upper end of the window on the x column");
    fit->add_option("--x-column", x_col, "x column name (default first column)");
    fit->add_option("--y-column", y_col, "y column name (default second column)");
    int max_iterations = dsr::FitOptions{}.max_iterations;
    fit->add_option("--max-iterations", max_iterations, "iteration limit (default 200)")->check(CLI::PositiveNumber);

    auto* noise = app.add_subcommand("noise", "synthetic phase noise from the configured PSD");
    add_common(noise, noise_c);
    noise->add_option("--samples", samples, "number of samples (default 65536)")->check(CLI::Range(2, 1 << 30));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_config;
    }

    try {
        if (spectrum->parsed()) {
            const auto cfg = load(spectrum_c);
            emit(cfg, "spectrum.csv", dsr::cmd_spectrum(cfg, lo, hi, points > 0 ? points : 201));
        } else if (relax->parsed()) {
            const auto cfg = load(relax_c);
            if (map) {
                emit(cfg, "relaxation_map.csv", dsr::cmd_relaxation_map(cfg));
            } else {
                for (const auto& [b, t] : dsr::cmd_relaxation(cfg))
                    emit(cfg, "relaxation_" + dsr::field_label(b) + ".csv", t);
            }
        } else if (shift->parsed()) {
            const auto cfg = load(shift_c);
            emit(cfg, "shift_vs_field.csv",
                 dsr::cmd_shift_vs_field(cfg, lo.value_or(28.0), hi.value_or(38.5), points > 0 ? points : 106));
        } else if (sens->parsed()) {
            const auto cfg = load(sens_c);
            emit(cfg, "sensitivity.csv", dsr::cmd_sensitivity(cfg, lo, hi, points > 0 ? points : 61));
        } else if (noise->parsed()) {
            const auto cfg = load(noise_c);
            emit(cfg, "noise.csv", dsr::cmd_noise(cfg, samples));
        } else if (fit->parsed()) {
            const auto cfg = load(fit_c);
            dsr::FitRequest req;
            req.model = model;
            req.init = read_init(init_arg);
            req.from = from;
            req.to = to;
            req.x_column = x_col;
            req.y_column = y_col;
            req.options.max_iterations = max_iterations;
            const auto data = dsr::read_csv_file(input);
            const auto result = dsr::cmd_fit(cfg, data, req);
            const auto path = output_path(cfg, "fit_report.json");
            dsr::write_json_file(path.string(), dsr::fit_report_json(result));
            std::cout << path.string() << '\n';
            for (std::size_t i = 0; i < result.names.size(); ++i)
                std::cout << "  " << result.names[i] << " = " << dsr::format_uncertainty(result.params[i], result.sigma[i])
                          << '\n';
            if (!result.converged) {
                std::cerr << "dsr: fit did not converge after " << result.n_iterations << " iterations\n";
                return exit_not_converged;
            }
        }
    } catch (const dsr::invalid_parameter& e) {
        std::cerr << "dsr: " << (e.field().empty() || dynamic_cast<const dsr::config_error*>(&e) ? "" : e.field() + ": ")
                  << e.what() << '\n';
        return exit_config;
    } catch (const std::exception& e) {
        std::cerr << "dsr: " << e.what() << '\n';
        return exit_other;
    }
    return 0;
}
