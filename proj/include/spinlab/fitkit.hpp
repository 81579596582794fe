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

#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace spinlab::fitkit {

/// Domain restriction of a parameter. The optimizer works on an
/// unconstrained internal variable theta:
///   positive:       p = exp(theta)
///   unit_open:      p = 1 / (1 + exp(-theta))        p in (0, 1)
///   unit_half_open: p = sin(theta)^2                  p in (0, 1]
enum class Bound { none, positive, unit_open, unit_half_open };

struct ParamSpec {
    std::string name;
    Bound bound = Bound::none;
    std::string unit;
};

using Evaluator = std::function<void(std::span<const double> x, std::span<const double> p, std::span<double> out)>;
/// Fills J (n x k) with d f(x_i) / d p_j.
using JacobianFn = std::function<void(std::span<const double> x, std::span<const double> p, Eigen::MatrixXd &J)>;
using GuessFn = std::function<std::vector<double>(std::span<const double> x, std::span<const double> y)>;

struct FitModel {
    std::string name;
    std::string formula;
    std::vector<ParamSpec> params;
    Evaluator eval;
    JacobianFn jacobian;  // empty -> central finite differences
    GuessFn guess;        // empty -> caller must supply init

    std::size_t size() const { return params.size(); }
    std::size_t index(const std::string &param) const;
    std::vector<double> evaluate(std::span<const double> x, std::span<const double> p) const;
    /// Analytic Jacobian when available, otherwise central differences.
    Eigen::MatrixXd jacobian_at(std::span<const double> x, std::span<const double> p) const;
    Eigen::MatrixXd finite_difference_jacobian(std::span<const double> x, std::span<const double> p) const;
};

enum class Weighting {
    unit,     // w = 1; covariance rescaled by reduced chi-square
    poisson,  // w = 1 / sqrt(N + 1), N = counts (defaults to y)
    sigma,    // w = 1 / sigma
};

struct FitData {
    std::vector<double> x;
    std::vector<double> y;
    Weighting weighting = Weighting::poisson;
    std::vector<double> counts;  // poisson: optional, defaults to y
    std::vector<double> sigma;   // sigma: required

    std::vector<double> weights() const;
};

enum class FitStatus { converged, max_iter, singular };
const char *to_string(FitStatus s);

struct FitOptions {
    int max_iter = 200;
    double tol = 1e-10;
    std::vector<bool> fixed;  // per-parameter mask, empty -> all free
};

struct FitResult {
    std::vector<std::string> names;
    std::vector<double> params;
    std::vector<double> sigmas;
    Eigen::MatrixXd covariance;  // full size, zero rows/cols for fixed params
    double chi2 = 0.0;
    double reduced_chi2 = 0.0;
    int dof = 0;
    int iterations = 0;
    FitStatus status = FitStatus::converged;
    std::vector<double> residuals;  // y - f, unweighted

    bool ok() const { return status == FitStatus::converged; }
    double value(const std::string &name) const;
    double sigma(const std::string &name) const;
};

/// Weighted nonlinear least squares (Levenberg-Marquardt).
/// Throws RankDeficiency if fewer points than free parameters.
FitResult fit(const FitModel &model, const FitData &data, std::vector<double> init, const FitOptions &opt = {});

/// fit() that throws FitFailure unless the status is converged.
FitResult fit_checked(const FitModel &model, const FitData &data, std::vector<double> init,
                      const FitOptions &opt = {});

/// Inverse of the transforms above, exposed for tests.
double to_internal(Bound b, double p);
double to_external(Bound b, double theta);
double external_derivative(Bound b, double theta);

// ---- error propagation ----

enum class PsdCheck { enforce, skip };

struct Propagated {
    double value;
    double sigma;
    std::vector<double> gradient;
};

/// First-order propagation with central-difference gradients:
///   sigma_f^2 = sum_ij g_i g_j rho_ij s_i s_j.
/// Throws InvalidInput if |rho| > 1, sigma < 0, or (with enforce) rho is not
/// positive semidefinite.
Propagated propagate(std::span<const double> values, std::span<const double> sigmas, const Eigen::MatrixXd &rho,
                     const std::function<double(std::span<const double>)> &fn, PsdCheck check = PsdCheck::enforce);

/// Same quadratic form with a caller-supplied gradient.
double propagate_linear(std::span<const double> gradient, std::span<const double> sigmas, const Eigen::MatrixXd &rho,
                        PsdCheck check = PsdCheck::enforce);

// ---- model registry ----

const std::vector<FitModel> &model_registry();
/// Throws InvalidInput for unknown names.
const FitModel &model(const std::string &name);

/// Arcsine density on [-omega, omega] convolved with a unit-area Lorentzian of
/// the given FWHM, evaluated at x. Adaptive quadrature over theta with
/// u = omega sin(theta).
double arcsine_lorentzian(double x, double omega, double fwhm);

}  // namespace spinlab::fitkit
