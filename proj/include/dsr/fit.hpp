#pragma once

// Levenberg-Marquardt least squares with finite-difference Jacobians.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dsr/error.hpp"

namespace dsr {

struct FitModel {
    std::string name;
    std::vector<std::string> param_names;
    std::vector<double> lower;  // -inf / +inf for open bounds
    std::vector<double> upper;
    std::vector<bool> fixed;
    std::function<double(std::span<const double> params, double x)> evaluate;

    std::size_t n_params() const { return param_names.size(); }
    std::size_t n_free() const { return static_cast<std::size_t>(std::count(fixed.begin(), fixed.end(), false)); }

    std::size_t index_of(const std::string& param) const {
        auto it = std::find(param_names.begin(), param_names.end(), param);
        if (it == param_names.end()) throw invalid_parameter(param, "unknown fit parameter '" + param + "'");
        return static_cast<std::size_t>(it - param_names.begin());
    }

    void set_fixed(const std::string& param, bool is_fixed) { fixed[index_of(param)] = is_fixed; }

    void validate() const {
        const auto n = n_params();
        detail::require(lower.size() == n && upper.size() == n && fixed.size() == n, "params",
                        "fit model bounds and mask must match the parameter list");
        detail::require(static_cast<bool>(evaluate), "evaluate", "fit model has no evaluator");
        detail::require(n_free() >= 1, "fixed", "fit model needs at least one free parameter");
        for (std::size_t i = 0; i < n; ++i)
            detail::require(lower[i] < upper[i], "bounds", "fit model lower bounds must be below upper bounds");
    }
};

struct FitResult {
    std::string model;
    std::vector<std::string> names;
    std::vector<double> params;
    std::vector<double> sigma;   // sqrt of the covariance diagonal; 0 for fixed parameters
    Eigen::MatrixXd covariance;  // full parameter space, zero rows/cols for fixed parameters
    double chi2 = 0.0;
    double chi2_reduced = 0.0;
    bool converged = false;
    int n_iterations = 0;
    std::vector<double> cost_history;  // cost after every accepted step, starting with the initial cost

    double value(const std::string& name) const { return params.at(index(name)); }
    double error(const std::string& name) const { return sigma.at(index(name)); }

private:
    std::size_t index(const std::string& name) const {
        auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) throw invalid_parameter(name, "no fit parameter named '" + name + "'");
        return static_cast<std::size_t>(it - names.begin());
    }
};

struct FitOptions {
    int max_iterations = 200;
    double relative_cost_tolerance = 1e-10;
    double relative_step_tolerance = 1e-10;
    double gradient_tolerance = 1e-6;  // cosine between residual and any Jacobian column
    double fd_relative_step = 1e-6;
    double fd_absolute_step = 1e-12;
    double initial_damping = 1e-3;
    // correlation-matrix eigenvalue below which parameters count as not separately identifiable
    double degeneracy_threshold = 1e-14;
};

namespace detail {

class LeastSquaresProblem {
public:
    LeastSquaresProblem(const FitModel& model, std::span<const double> x, std::span<const double> y,
                        std::vector<double> weights, const FitOptions& opts)
        : model_(model), x_(x), y_(y), w_(std::move(weights)), opts_(opts) {
        for (std::size_t i = 0; i < model.n_params(); ++i)
            if (!model.fixed[i]) free_.push_back(i);
    }

    std::size_t n_free() const { return free_.size(); }
    std::size_t n_points() const { return x_.size(); }
    const std::vector<std::size_t>& free_indices() const { return free_; }

    Eigen::VectorXd residuals(const std::vector<double>& theta) const {
        Eigen::VectorXd r(x_.size());
        for (std::size_t i = 0; i < x_.size(); ++i) r[i] = (y_[i] - model_.evaluate(theta, x_[i])) * w_[i];
        return r;
    }

    // d r / d theta_free by central differences
    Eigen::MatrixXd jacobian(const std::vector<double>& theta) const {
        Eigen::MatrixXd jac(x_.size(), free_.size());
        std::vector<double> probe = theta;
        for (std::size_t c = 0; c < free_.size(); ++c) {
            const std::size_t j = free_[c];
            const double h = std::max(opts_.fd_relative_step * std::fabs(theta[j]), opts_.fd_absolute_step);
            probe[j] = theta[j] + h;
            const Eigen::VectorXd up = residuals(probe);
            probe[j] = theta[j] - h;
            const Eigen::VectorXd down = residuals(probe);
            probe[j] = theta[j];
            jac.col(static_cast<Eigen::Index>(c)) = (up - down) / (2.0 * h);
        }
        return jac;
    }

    // Throws singular_jacobian when a column vanishes or the columns are linearly dependent.
    void check_identifiable(const Eigen::MatrixXd& jac) const {
        const Eigen::Index p = jac.cols();
        for (Eigen::Index c = 0; c < p; ++c) {
            if (jac.col(c).cwiseAbs().maxCoeff() == 0.0) {
                const auto& name = model_.param_names[free_[static_cast<std::size_t>(c)]];
                throw singular_jacobian("fit parameter '" + name + "' has no influence on the model");
            }
        }
        if (p < 2) return;
        const Eigen::MatrixXd a = jac.transpose() * jac;
        const Eigen::VectorXd d = a.diagonal().cwiseSqrt().cwiseInverse();
        const Eigen::MatrixXd corr = d.asDiagonal() * a * d.asDiagonal();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(corr, Eigen::EigenvaluesOnly);
        if (eig.eigenvalues().minCoeff() < opts_.degeneracy_threshold)
            throw singular_jacobian("fit parameters are not separately identifiable (degenerate Jacobian)");
    }

    std::vector<double> step_within_bounds(const std::vector<double>& theta, const Eigen::VectorXd& delta) const {
        std::vector<double> next = theta;
        for (std::size_t c = 0; c < free_.size(); ++c) {
            const std::size_t j = free_[c];
            double v = theta[j] + delta[static_cast<Eigen::Index>(c)];
            // a step that would leave the box goes halfway to the violated bound instead
            if (v < model_.lower[j]) v = 0.5 * (theta[j] + model_.lower[j]);
            if (v > model_.upper[j]) v = 0.5 * (theta[j] + model_.upper[j]);
            next[j] = v;
        }
        return next;
    }

private:
    const FitModel& model_;
    std::span<const double> x_;
    std::span<const double> y_;
    std::vector<double> w_;
    const FitOptions& opts_;
    std::vector<std::size_t> free_;
};

inline double max_residual_cosine(const Eigen::MatrixXd& jac, const Eigen::VectorXd& r) {
    const double rn = r.norm();
    if (rn == 0.0) return 0.0;
    double worst = 0.0;
    for (Eigen::Index c = 0; c < jac.cols(); ++c) {
        const double cn = jac.col(c).norm();
        if (cn > 0) worst = std::max(worst, std::fabs(jac.col(c).dot(r)) / (cn * rn));
    }
    return worst;
}

inline FitResult fit_weighted(const FitModel& model, std::span<const double> x, std::span<const double> y,
                              std::vector<double> weights, bool scale_by_chi2, std::span<const double> init,
                              const FitOptions& opts) {
    model.validate();
    if (x.size() != y.size()) throw length_mismatch("x and y differ in length");
    if (init.size() != model.n_params()) throw length_mismatch("initial parameter count does not match the model");
    if (x.size() < model.n_free() + 1) throw invalid_parameter("x", "need more data points than free parameters");

    double data_scale = 0.0;  // |y w|^2, reference for the rounding floor of the cost
    for (std::size_t i = 0; i < y.size(); ++i) data_scale += (y[i] * weights[i]) * (y[i] * weights[i]);

    const double cost_floor = 1e-28 * std::max(data_scale, std::numeric_limits<double>::min());

    LeastSquaresProblem problem(model, x, y, std::move(weights), opts);
    std::vector<double> theta(init.begin(), init.end());
    for (std::size_t j = 0; j < theta.size(); ++j) theta[j] = std::clamp(theta[j], model.lower[j], model.upper[j]);

    Eigen::VectorXd r = problem.residuals(theta);
    double cost = r.squaredNorm();

    FitResult res;
    res.model = model.name;
    res.names = model.param_names;
    res.cost_history.push_back(cost);

    double lambda = opts.initial_damping;
    bool converged = false;
    int it = 0;
    for (; it < opts.max_iterations && !converged; ++it) {
        const Eigen::MatrixXd jac = problem.jacobian(theta);
        if (it == 0) problem.check_identifiable(jac);  // transient near-degeneracy on the way is left to the damping
        const Eigen::MatrixXd a = jac.transpose() * jac;
        const Eigen::VectorXd g = jac.transpose() * r;
        const Eigen::VectorXd diag = a.diagonal();

        bool accepted = false;
        while (!accepted) {
            Eigen::MatrixXd damped = a;
            damped.diagonal() += lambda * diag;
            const Eigen::VectorXd delta = damped.ldlt().solve(-g);
            const auto trial = problem.step_within_bounds(theta, delta);
            const Eigen::VectorXd r_trial = problem.residuals(trial);
            const double cost_trial = r_trial.squaredNorm();

            double rel_step = 0.0;
            for (std::size_t c = 0; c < problem.n_free(); ++c) {
                const std::size_t j = problem.free_indices()[c];
                rel_step = std::max(rel_step, std::fabs(trial[j] - theta[j]) / (std::fabs(theta[j]) + opts.fd_absolute_step));
            }

            if (std::isfinite(cost_trial) && cost_trial < cost) {
                const double decrease = cost - cost_trial;
                theta = trial;
                r = r_trial;
                cost = cost_trial;
                res.cost_history.push_back(cost);
                lambda = std::max(lambda / 10.0, 1e-15);
                accepted = true;
                if (decrease <= opts.relative_cost_tolerance * (cost + decrease) ||
                    rel_step < opts.relative_step_tolerance || cost <= cost_floor)
                    converged = true;
            } else {
                lambda *= 10.0;
                if (lambda > 1e16 || rel_step < opts.relative_step_tolerance) {
                    // no descent left at this resolution: stationary if the gradient test agrees
                    converged = cost <= cost_floor || max_residual_cosine(jac, r) < opts.gradient_tolerance;
                    break;
                }
            }
        }
        if (!accepted) {
            ++it;
            break;
        }
    }

    // a few undamped steps pin the optimum well below the stopping tolerance
    for (int polish = 0; converged && polish < 3; ++polish) {
        const Eigen::MatrixXd jac = problem.jacobian(theta);
        const Eigen::VectorXd delta = (jac.transpose() * jac).ldlt().solve(-(jac.transpose() * r));
        const auto trial = problem.step_within_bounds(theta, delta);
        const Eigen::VectorXd r_trial = problem.residuals(trial);
        const double cost_trial = r_trial.squaredNorm();
        if (!std::isfinite(cost_trial) || cost_trial > cost) break;
        const bool moved = trial != theta;
        theta = trial;
        r = r_trial;
        if (cost_trial < cost) res.cost_history.push_back(cost_trial);
        cost = cost_trial;
        if (!moved) break;
    }

    res.params = theta;
    res.n_iterations = it;
    res.converged = converged;
    res.chi2 = cost;
    const double dof = static_cast<double>(x.size() - problem.n_free());
    res.chi2_reduced = cost / dof;

    const Eigen::MatrixXd jac = problem.jacobian(theta);
    problem.check_identifiable(jac);
    const Eigen::MatrixXd a = jac.transpose() * jac;
    const Eigen::VectorXd d = a.diagonal().cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd scaled = d.asDiagonal() * a * d.asDiagonal();
    Eigen::MatrixXd cov_free = d.asDiagonal() * scaled.inverse() * d.asDiagonal();
    if (scale_by_chi2) cov_free *= res.chi2_reduced;
    cov_free = 0.5 * (cov_free + cov_free.transpose());

    const auto n = static_cast<Eigen::Index>(model.n_params());
    res.covariance = Eigen::MatrixXd::Zero(n, n);
    const auto& fi = problem.free_indices();
    for (std::size_t a_i = 0; a_i < fi.size(); ++a_i)
        for (std::size_t b_i = 0; b_i < fi.size(); ++b_i)
            res.covariance(static_cast<Eigen::Index>(fi[a_i]), static_cast<Eigen::Index>(fi[b_i])) =
                cov_free(static_cast<Eigen::Index>(a_i), static_cast<Eigen::Index>(b_i));
    res.sigma.assign(model.n_params(), 0.0);
    for (std::size_t j = 0; j < model.n_params(); ++j)
        res.sigma[j] = std::sqrt(std::max(0.0, res.covariance(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j))));
    return res;
}

} // namespace detail

/// Unweighted fit; the covariance is scaled by the reduced chi-square.
inline FitResult fit_nonlinear(const FitModel& model, std::span<const double> x, std::span<const double> y,
                               std::span<const double> init, const FitOptions& opts = {}) {
    return detail::fit_weighted(model, x, y, std::vector<double>(x.size(), 1.0), true, init, opts);
}

/// Uniform measurement error; treated like the unweighted case (covariance scaled by chi2_reduced).
inline FitResult fit_nonlinear(const FitModel& model, std::span<const double> x, std::span<const double> y,
                               double y_err, std::span<const double> init, const FitOptions& opts = {}) {
    if (!(y_err > 0)) throw invalid_parameter("y_err", "measurement error must be > 0");
    return detail::fit_weighted(model, x, y, std::vector<double>(x.size(), 1.0 / y_err), true, init, opts);
}

/// Per-point measurement errors; the covariance is used as is.
inline FitResult fit_nonlinear(const FitModel& model, std::span<const double> x, std::span<const double> y,
                               std::span<const double> y_err, std::span<const double> init,
                               const FitOptions& opts = {}) {
    if (y_err.size() != y.size()) throw length_mismatch("y_err and y differ in length");
    std::vector<double> w(y_err.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (!(y_err[i] > 0)) throw invalid_parameter("y_err", "measurement errors must be > 0");
        w[i] = 1.0 / y_err[i];
    }
    return detail::fit_weighted(model, x, y, std::move(w), false, init, opts);
}

} // namespace dsr
