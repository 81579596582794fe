// Copyright 2026 The spinlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "spinlab/fitkit.hpp"

#include "spinlab/errors.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>

namespace spinlab::fitkit {

std::size_t FitModel::index(const std::string &param) const {
    for (std::size_t i = 0; i < params.size(); ++i)
        if (params[i].name == param) return i;
    throw InvalidInput("model " + name + " has no parameter '" + param + "'");
}

std::vector<double> FitModel::evaluate(std::span<const double> x, std::span<const double> p) const {
    std::vector<double> out(x.size());
    eval(x, p, out);
    return out;
}

Eigen::MatrixXd FitModel::finite_difference_jacobian(std::span<const double> x, std::span<const double> p) const {
    const double h0 = std::cbrt(std::numeric_limits<double>::epsilon());
    Eigen::MatrixXd J(x.size(), p.size());
    std::vector<double> q(p.begin(), p.end());
    std::vector<double> fp(x.size()), fm(x.size());
    for (std::size_t j = 0; j < p.size(); ++j) {
        double h = h0 * std::max(std::abs(p[j]), 1.0);
        q[j] = p[j] + h;
        eval(x, q, fp);
        q[j] = p[j] - h;
        eval(x, q, fm);
        q[j] = p[j];
        for (std::size_t i = 0; i < x.size(); ++i) J(i, j) = (fp[i] - fm[i]) / (2 * h);
    }
    return J;
}

Eigen::MatrixXd FitModel::jacobian_at(std::span<const double> x, std::span<const double> p) const {
    if (!jacobian) return finite_difference_jacobian(x, p);
    Eigen::MatrixXd J(x.size(), p.size());
    jacobian(x, p, J);
    return J;
}

std::vector<double> FitData::weights() const {
    std::vector<double> w(y.size(), 1.0);
    switch (weighting) {
        case Weighting::unit:
            break;
        case Weighting::poisson: {
            const auto &n = counts.empty() ? y : counts;
            require(n.size() == y.size(), "counts length differs from y");
            for (std::size_t i = 0; i < y.size(); ++i) {
                require(n[i] > -1.0, "poisson weights need counts > -1");
                w[i] = 1.0 / std::sqrt(n[i] + 1.0);
            }
            break;
        }
        case Weighting::sigma:
            require(sigma.size() == y.size(), "sigma length differs from y");
            for (std::size_t i = 0; i < y.size(); ++i) {
                require(sigma[i] > 0.0 && std::isfinite(sigma[i]), "sigma must be positive");
                w[i] = 1.0 / sigma[i];
            }
            break;
    }
    return w;
}

const char *to_string(FitStatus s) {
    switch (s) {
        case FitStatus::converged: return "converged";
        case FitStatus::max_iter: return "max_iter";
        case FitStatus::singular: return "singular";
    }
    return "?";
}

double FitResult::value(const std::string &name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return params[i];
    throw InvalidInput("no fit parameter '" + name + "'");
}

double FitResult::sigma(const std::string &name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return sigmas[i];
    throw InvalidInput("no fit parameter '" + name + "'");
}

double to_internal(Bound b, double p) {
    switch (b) {
        case Bound::none: return p;
        case Bound::positive:
            require(p > 0, "positive parameter initialized at " + std::to_string(p));
            return std::log(p);
        case Bound::unit_open:
            require(p > 0 && p < 1, "(0,1) parameter initialized at " + std::to_string(p));
            return std::log(p / (1 - p));
        case Bound::unit_half_open:
            require(p > 0 && p <= 1, "(0,1] parameter initialized at " + std::to_string(p));
            return std::asin(std::sqrt(p));
    }
    return p;
}

double to_external(Bound b, double t) {
    switch (b) {
        case Bound::none: return t;
        case Bound::positive: return std::exp(t);
        case Bound::unit_open: return 1.0 / (1.0 + std::exp(-t));
        case Bound::unit_half_open: {
            double s = std::sin(t);
            return s * s;
        }
    }
    return t;
}

double external_derivative(Bound b, double t) {
    switch (b) {
        case Bound::none: return 1.0;
        case Bound::positive: return std::exp(t);
        case Bound::unit_open: {
            double s = 1.0 / (1.0 + std::exp(-t));
            return s * (1 - s);
        }
        case Bound::unit_half_open: return std::sin(2 * t);
    }
    return 1.0;
}

namespace {

struct Problem {
    const FitModel &model;
    std::span<const double> x;
    std::span<const double> y;
    std::vector<double> w;
    std::vector<std::size_t> free;
    std::vector<double> base;  // external values of all params (fixed ones stay)

    std::vector<double> external(const Eigen::VectorXd &theta) const {
        std::vector<double> p = base;
        for (std::size_t k = 0; k < free.size(); ++k)
            p[free[k]] = to_external(model.params[free[k]].bound, theta[k]);
        return p;
    }

    // Weighted residual r_i = w_i (y_i - f_i); returns chi2 = |r|^2.
    double residual(const std::vector<double> &p, Eigen::VectorXd &r) const {
        auto f = model.evaluate(x, p);
        r.resize(static_cast<Eigen::Index>(y.size()));
        double chi2 = 0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            r[i] = w[i] * (y[i] - f[i]);
            chi2 += r[i] * r[i];
        }
        return std::isfinite(chi2) ? chi2 : std::numeric_limits<double>::infinity();
    }

    // Weighted Jacobian of f w.r.t. the free external parameters.
    Eigen::MatrixXd jac_external(const std::vector<double> &p) const {
        Eigen::MatrixXd J = model.jacobian_at(x, p);
        Eigen::MatrixXd Jf(static_cast<Eigen::Index>(y.size()), static_cast<Eigen::Index>(free.size()));
        for (std::size_t k = 0; k < free.size(); ++k)
            for (std::size_t i = 0; i < y.size(); ++i) Jf(i, k) = w[i] * J(i, free[k]);
        return Jf;
    }
};

}  // namespace

FitResult fit(const FitModel &model, const FitData &data, std::vector<double> init, const FitOptions &opt) {
    const std::size_t k = model.size();
    require(data.x.size() == data.y.size(), "x and y lengths differ");
    if (init.empty()) {
        require(static_cast<bool>(model.guess), "model " + model.name + " needs an initial guess");
        init = model.guess(data.x, data.y);
    }
    require(init.size() == k, "initial guess has wrong length for model " + model.name);
    require(opt.fixed.empty() || opt.fixed.size() == k, "fixed mask has wrong length");
    for (double v : data.y) require(std::isfinite(v), "non-finite y value");
    for (double v : data.x) require(std::isfinite(v), "non-finite x value");

    Problem prob{model, data.x, data.y, data.weights(), {}, init};
    for (std::size_t j = 0; j < k; ++j)
        if (opt.fixed.empty() || !opt.fixed[j]) prob.free.push_back(j);
    const std::size_t m = prob.free.size();
    if (data.y.size() < m)
        throw RankDeficiency("model " + model.name + " has " + std::to_string(m) + " free parameters but only " +
                             std::to_string(data.y.size()) + " data points");

    Eigen::VectorXd theta(static_cast<Eigen::Index>(m));
    for (std::size_t a = 0; a < m; ++a) theta[a] = to_internal(model.params[prob.free[a]].bound, init[prob.free[a]]);

    Eigen::VectorXd r, r_new;
    auto p = prob.external(theta);
    double chi2 = prob.residual(p, r);
    require(std::isfinite(chi2), "model " + model.name + " is not finite at the initial guess");

    FitResult res;
    res.status = FitStatus::max_iter;
    double mu = 1e-3;
    int it = 0;
    for (; it < opt.max_iter && m > 0; ++it) {
        if (chi2 == 0.0) {
            res.status = FitStatus::converged;
            break;
        }
        Eigen::MatrixXd J = prob.jac_external(p);
        for (std::size_t a = 0; a < m; ++a)
            J.col(a) *= external_derivative(model.params[prob.free[a]].bound, theta[a]);
        Eigen::MatrixXd A = J.transpose() * J;
        Eigen::VectorXd g = J.transpose() * r;
        if (g.lpNorm<Eigen::Infinity>() <= opt.tol * opt.tol * std::max(chi2, 1e-300)) {
            res.status = FitStatus::converged;
            break;
        }
        double dmax = A.diagonal().maxCoeff();
        bool accepted = false;
        while (!accepted) {
            Eigen::MatrixXd Ad = A;
            for (Eigen::Index a = 0; a < Ad.rows(); ++a)
                Ad(a, a) += mu * std::max(A(a, a), 1e-12 * std::max(dmax, 1e-300));
            Eigen::VectorXd step = Ad.ldlt().solve(g);
            Eigen::VectorXd trial = theta + step;
            auto pt = prob.external(trial);
            double chi2_new = step.allFinite() ? prob.residual(pt, r_new) : std::numeric_limits<double>::infinity();
            if (chi2_new <= chi2) {
                // Converge on a negligible step or, near the Gauss-Newton
                // regime, on a negligible chi-square gain.
                bool small_step = step.norm() <= opt.tol * (theta.norm() + opt.tol);
                bool small_gain = mu <= 1e-6 && (chi2 - chi2_new) <= 1e-15 * chi2;
                theta = trial;
                p = std::move(pt);
                r = r_new;
                chi2 = chi2_new;
                mu = std::max(mu / 10, 1e-15);
                accepted = true;
                if (small_step || small_gain) res.status = FitStatus::converged;
            } else {
                mu *= 10;
                if (mu > 1e20) {
                    // No descent direction left at machine precision.
                    res.status = FitStatus::converged;
                    break;
                }
            }
        }
        if (res.status == FitStatus::converged) {
            ++it;
            break;
        }
    }
    if (m == 0) res.status = FitStatus::converged;

    res.iterations = it;
    res.params = p;
    res.chi2 = chi2;
    res.dof = static_cast<int>(data.y.size()) - static_cast<int>(m);
    res.reduced_chi2 = res.dof > 0 ? chi2 / res.dof : (chi2 == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    for (const auto &s : model.params) res.names.push_back(s.name);
    auto f = model.evaluate(data.x, p);
    res.residuals.resize(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) res.residuals[i] = data.y[i] - f[i];

    // Covariance from the normal matrix in external coordinates, so that
    // parameters sitting on a bound still get a finite uncertainty.
    res.covariance = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    res.sigmas.assign(k, 0.0);
    if (m > 0) {
        Eigen::MatrixXd J = prob.jac_external(p);
        Eigen::MatrixXd N = J.transpose() * J;
        // Rank test on the Jacobi-scaled matrix so parameter units do not matter.
        Eigen::VectorXd d = N.diagonal().cwiseMax(0.0).cwiseSqrt();
        const bool finite = J.allFinite() && (d.array() > 0).all();
        Eigen::MatrixXd Ns = finite ? Eigen::MatrixXd(d.cwiseInverse().asDiagonal() * N * d.cwiseInverse().asDiagonal())
                                    : N;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Ns);
        double emax = es.eigenvalues().maxCoeff();
        double emin = es.eigenvalues().minCoeff();
        if (!finite || !(emax > 0) || emin <= 1e-14 * emax) {
            res.status = FitStatus::singular;
        } else {
            Eigen::MatrixXd C = d.cwiseInverse().asDiagonal() *
                                (es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
                                 es.eigenvectors().transpose()) *
                                d.cwiseInverse().asDiagonal();
            if (data.weighting == Weighting::unit && res.dof > 0) C *= res.reduced_chi2;
            for (std::size_t a = 0; a < m; ++a)
                for (std::size_t b = 0; b < m; ++b) res.covariance(prob.free[a], prob.free[b]) = C(a, b);
            for (std::size_t a = 0; a < m; ++a) res.sigmas[prob.free[a]] = std::sqrt(std::max(C(a, a), 0.0));
        }
    }
    return res;
}

FitResult fit_checked(const FitModel &model, const FitData &data, std::vector<double> init, const FitOptions &opt) {
    FitResult r = fit(model, data, std::move(init), opt);
    if (!r.ok())
        throw FitFailure("fit of " + model.name + " ended with status " + to_string(r.status) + " after " +
                         std::to_string(r.iterations) + " iterations, chi2 = " + std::to_string(r.chi2));
    return r;
}

namespace {

void check_rho(const Eigen::MatrixXd &rho, std::size_t n, PsdCheck check) {
    require(static_cast<std::size_t>(rho.rows()) == n && static_cast<std::size_t>(rho.cols()) == n,
            "correlation matrix has wrong shape");
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            require(std::abs(rho(i, j)) <= 1.0, "correlation coefficient outside [-1, 1]");
            require(std::abs(rho(i, j) - rho(j, i)) <= 1e-12, "correlation matrix not symmetric");
        }
    if (check == PsdCheck::enforce) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(rho);
        require(es.eigenvalues().minCoeff() >= -1e-12 * std::max(1.0, rho.trace()),
                "correlation matrix is not positive semidefinite");
    }
}

}  // namespace

double propagate_linear(std::span<const double> gradient, std::span<const double> sigmas, const Eigen::MatrixXd &rho,
                        PsdCheck check) {
    const std::size_t n = gradient.size();
    require(sigmas.size() == n, "sigma length differs from gradient");
    for (double s : sigmas) require(s >= 0.0, "negative sigma");
    check_rho(rho, n, check);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) var += gradient[i] * gradient[j] * rho(i, j) * sigmas[i] * sigmas[j];
    return std::sqrt(std::max(var, 0.0));
}

Propagated propagate(std::span<const double> values, std::span<const double> sigmas, const Eigen::MatrixXd &rho,
                     const std::function<double(std::span<const double>)> &fn, PsdCheck check) {
    const std::size_t n = values.size();
    require(sigmas.size() == n, "sigma length differs from values");
    check_rho(rho, n, check);
    Propagated out;
    out.value = fn(values);
    out.gradient.resize(n);
    std::vector<double> q(values.begin(), values.end());
    const double h0 = std::cbrt(std::numeric_limits<double>::epsilon());
    for (std::size_t i = 0; i < n; ++i) {
        double h = h0 * std::max({std::abs(values[i]), sigmas[i], 1e-300});
        q[i] = values[i] + h;
        double fp = fn(q);
        q[i] = values[i] - h;
        double fm = fn(q);
        q[i] = values[i];
        out.gradient[i] = (fp - fm) / (2 * h);
    }
    out.sigma = propagate_linear(out.gradient, sigmas, rho, check);
    return out;
}

}  // namespace spinlab::fitkit
