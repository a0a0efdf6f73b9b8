#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "dsr/error.hpp"
#include "dsr/fit.hpp"

namespace dsr {

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw invalid_parameter("not a number: '" + std::string(s) + "'");
    return v;
}

/// Column-major numeric table.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> data;

    std::size_t n_rows() const { return data.empty() ? 0 : data.front().size(); }

    const std::vector<double>& column(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return data[i];
        throw invalid_parameter(name, "no column named '" + name + "'");
    }

    void add(std::string name, std::vector<double> values) {
        if (!data.empty() && values.size() != n_rows()) throw length_mismatch("column '" + name + "' has wrong length");
        columns.push_back(std::move(name));
        data.push_back(std::move(values));
    }
};

inline void write_csv(std::ostream& os, const Table& t) {
    for (std::size_t c = 0; c < t.columns.size(); ++c) os << (c ? "," : "") << t.columns[c];
    os << '\n';
    for (std::size_t r = 0; r < t.n_rows(); ++r) {
        for (std::size_t c = 0; c < t.data.size(); ++c) os << (c ? "," : "") << format_double(t.data[c][r]);
        os << '\n';
    }
}

inline void write_csv_file(const std::string& path, const Table& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    write_csv(os, t);
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline Table read_csv(std::istream& is) {
    Table t;
    std::string line;
    if (!std::getline(is, line)) throw invalid_parameter("csv", "empty CSV input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    {
        std::stringstream ss(line);
        std::string name;
        while (std::getline(ss, name, ',')) t.columns.push_back(name);
    }
    t.data.resize(t.columns.size());
    std::size_t row = 1;
    while (std::getline(is, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::size_t col = 0, start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            const auto cell = std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos : comma - start);
            if (col >= t.columns.size())
                throw invalid_parameter("csv", "row " + std::to_string(row) + " has too many fields");
            try {
                t.data[col].push_back(parse_double(cell));
            } catch (const invalid_parameter& e) {
                throw invalid_parameter("csv", "row " + std::to_string(row) + ": " + e.what());
            }
            ++col;
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (col != t.columns.size())
            throw invalid_parameter("csv", "row " + std::to_string(row) + " has too few fields");
    }
    return t;
}

inline Table read_csv_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw invalid_parameter("csv", "cannot open " + path);
    return read_csv(is);
}

/// Value with its 1-sigma error on the last digit, e.g. 0.74(6) or 6.0(1)e3.
inline std::string format_uncertainty(double value, double sigma) {
    if (!(sigma > 0) || !std::isfinite(sigma) || !std::isfinite(value)) return format_double(value);
    int d = static_cast<int>(std::floor(std::log10(sigma)));
    long digit = std::lround(sigma / std::pow(10.0, d));
    if (digit >= 10) {
        ++d;
        digit = 1;
    }
    const double rounded = std::round(value / std::pow(10.0, d)) * std::pow(10.0, d) + 0.0;  // no "-0"
    int e = rounded != 0.0 ? static_cast<int>(std::floor(std::log10(std::fabs(rounded)))) : d;
    char buf[64];
    if (d <= 0 && e >= -3) {
        std::snprintf(buf, sizeof buf, "%.*f(%ld)", -d, rounded, digit);
        return buf;
    }
    if (e < d) e = d;
    std::snprintf(buf, sizeof buf, "%.*f(%ld)e%d", e - d, rounded / std::pow(10.0, e), digit, e);
    return buf;
}

inline nlohmann::json fit_report_json(const FitResult& r) {
    nlohmann::json params = nlohmann::json::object();
    for (std::size_t i = 0; i < r.names.size(); ++i)
        params[r.names[i]] = {{"value", r.params[i]}, {"sigma", r.sigma[i]}};
    return {{"model", r.model},
            {"params", params},
            {"chi2_reduced", r.chi2_reduced},
            {"converged", r.converged},
            {"n_iterations", r.n_iterations}};
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << j.dump(2) << '\n';
    if (!os) throw std::runtime_error("write failed: " + path);
}

} // namespace dsr
