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

#include "spinlab/errors.hpp"
#include "spinlab/fitkit.hpp"

#include <boost/math/constants/constants.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

namespace spinlab::fitkit {

namespace {

constexpr double kPi = boost::math::constants::pi<double>();

// ---- guess helpers ----

std::size_t argmax(std::span<const double> y) {
    return static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
}

double tail_mean(std::span<const double> y) {
    std::size_t n = std::max<std::size_t>(1, y.size() / 10);
    return std::accumulate(y.end() - static_cast<std::ptrdiff_t>(n), y.end(), 0.0) / static_cast<double>(n);
}

double span_of(std::span<const double> x) {
    auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    return std::max(*hi - *lo, 1e-300);
}

// Full width at half maximum of (y - base) around its peak.
double half_max_width(std::span<const double> x, std::span<const double> y, double base) {
    std::size_t k = argmax(y);
    double half = base + 0.5 * (y[k] - base);
    std::size_t lo = k, hi = k;
    while (lo > 0 && y[lo] > half) --lo;
    while (hi + 1 < y.size() && y[hi] > half) ++hi;
    double w = std::abs(x[hi] - x[lo]);
    return w > 0 ? w : span_of(x) / 10;
}

// Least-squares line through (u, v); returns {slope, intercept}.
std::pair<double, double> line(const std::vector<double> &u, const std::vector<double> &v) {
    double n = static_cast<double>(u.size());
    double su = 0, sv = 0, suu = 0, suv = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        su += u[i];
        sv += v[i];
        suu += u[i] * u[i];
        suv += u[i] * v[i];
    }
    double den = n * suu - su * su;
    if (u.size() < 2 || den == 0) return {0.0, n > 0 ? sv / n : 0.0};
    double b = (n * suv - su * sv) / den;
    return {b, (sv - b * su) / n};
}

// ---- models ----

FitModel exp_decay() {
    FitModel m;
    m.name = "exp_decay";
    m.formula = "A*exp(-gamma*x) + C";
    m.params = {{"A", Bound::none, "y"}, {"gamma", Bound::positive, "1/x"}, {"C", Bound::none, "y"}};
    m.eval = [](auto x, auto p, auto out) {
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = p[0] * std::exp(-p[1] * x[i]) + p[2];
    };
    m.jacobian = [](auto x, auto p, Eigen::MatrixXd &J) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            double e = std::exp(-p[1] * x[i]);
            J(i, 0) = e;
            J(i, 1) = -p[0] * x[i] * e;
            J(i, 2) = 1.0;
        }
    };
    m.guess = [](auto x, auto y) {
        double c = tail_mean(y);
        double a0 = y[0] - c;
        double gamma = 1.0 / (span_of(x) / 3);
        for (std::size_t i = 1; i < y.size(); ++i)
            if (std::abs(y[i] - c) < std::abs(a0) / std::exp(1.0) && x[i] != x[0]) {
                gamma = 1.0 / std::abs(x[i] - x[0]);
                break;
            }
        return std::vector<double>{a0 * std::exp(gamma * x[0]), gamma, c};
    };
    return m;
}

FitModel saturation() {
    FitModel m;
    m.name = "saturation";
    m.formula = "i_sat*(x/p_sat)/(1 + x/p_sat) + n_bgr*x + C";
    m.params = {{"i_sat", Bound::positive, "counts/s"},
                {"p_sat", Bound::positive, "x"},
                {"n_bgr", Bound::none, "counts/s/x"},
                {"C", Bound::none, "counts/s"}};
    m.eval = [](auto x, auto p, auto out) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            double u = x[i] / p[1];
            out[i] = p[0] * u / (1 + u) + p[2] * x[i] + p[3];
        }
    };
    m.jacobian = [](auto x, auto p, Eigen::MatrixXd &J) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            double u = x[i] / p[1];
            J(i, 0) = u / (1 + u);
            J(i, 1) = -p[0] * x[i] / (p[1] * p[1] * (1 + u) * (1 + u));
            J(i, 2) = x[i];
            J(i, 3) = 1.0;
        }
    };
    m.guess = [](auto x, auto y) {
        std::size_t lo = static_cast<std::size_t>(std::min_element(x.begin(), x.end()) - x.begin());
        double c = y[lo];
        double top = *std::max_element(y.begin(), y.end());
        std::vector<double> xs(x.begin(), x.end());
        std::nth_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(xs.size() / 2), xs.end());
        double psat = std::max(xs[xs.size() / 2], 1e-12);
        return std::vector<double>{std::max(top - c, 1e-12), psat, 0.0, c};
    };
    return m;
}

FitModel sine_gaussian() {
    FitModel m;
    m.name = "sine_gaussian";
    m.formula = "A*exp(-(x/T)^2)*cos(2*pi*f*x + phi) + C";
    m.params = {{"A", Bound::none, "y"},
                {"T", Bound::positive, "x"},
                {"f", Bound::none, "1/x"},
                {"phi", Bound::none, "rad"},
                {"C", Bound::none, "y"}};
    m.eval = [](auto x, auto p, auto out) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            double z = x[i] / p[1];
            out[i] = p[0] * std::exp(-z * z) * std::cos(2 * kPi * p[2] * x[i] + p[3]) + p[4];
        }
    };
    m.jacobian = [](auto x, auto p, Eigen::MatrixXd &J) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            double z = x[i] / p[1];
            double g = std::exp(-z * z);
            double arg = 2 * kPi * p[2] * x[i] + p[3];
            double c = std::cos(arg), s = std::sin(arg);
            J(i, 0) = g * c;
            J(i, 1) = p[0] * c * g * 2 * z * z / p[1];
            J(i, 2) = -p[0] * g * s * 2 * kPi * x[i];
            J(i, 3) = -p[0] * g * s;
            J(i, 4) = 1.0;
        }
    };
    m.guess = [](auto x, auto y) {
        double c = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
        double span = span_of(x);
        // Strongest component of a discrete Fourier scan up to the Nyquist
        // frequency of a uniform grid; aliases above it fit equally well.
        double best = -1, f0 = 1 / span, phi0 = 0;
        std::size_t nf = 2 * (y.size() - 1);
        for (std::size_t q = 1; q <= nf; ++q) {
            double f = static_cast<double>(q) / (4 * span);
            std::complex<double> acc = 0;
            for (std::size_t i = 0; i < y.size(); ++i) acc += (y[i] - c) * std::polar(1.0, -2 * kPi * f * x[i]);
            if (std::abs(acc) > best) {
                best = std::abs(acc);
                f0 = f;
                phi0 = std::arg(acc);
            }
        }
        double a = 0;
        for (double v : y) a = std::max(a, std::abs(v - c));
        return std::vector<double>{a, span / 2, f0, phi0, c};
    };
    return m;
}

FitModel stretched_exp() {
    FitModel m;
    m.name = "stretched_exp";
    m.formula = "A*exp(-(x/T2)^xi)";
    m.params = {{"A", Bound::none, "y"}, {"T2", Bound::positive, "x"}, {"xi", Bound::positive, ""}};
    m.eval = [](auto x, auto p, auto out) {
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = p[0] * std::exp(-std::pow(std::abs(x[i]) / p[1], p[2]));
    };
    m.jacobian = [](auto x, auto p, Eigen::MatrixXd &J) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            double z = std::abs(x[i]) / p[1];
            double u = std::pow(z, p[2]);
            double e = std::exp(-u);
            J(i, 0) = e;
            J(i, 1) = p[0] * e * p[2] * u / p[1];
            J(i, 2) = z > 0 ? -p[0] * e * u * std::log(z) : 0.0;
        }
    };
    m.guess = [](auto x, auto y) {
        std::size_t k = argmax(y);
        double a = y[k];
        double t2 = span_of(x) / 2;
        for (std::size_t i = k; i < y.size(); ++i)
            if (y[i] < a / std::exp(1.0)) {
                t2 = std::max(std::abs(x[i]), 1e-300);
                break;
            }
        return std::vector<double>{a, t2, 1.5};
    };
    return m;
}

FitModel power_law() {
    FitModel m;
    m.name = "power_law";
    m.formula = "c*x^beta";
    m.params = {{"c", Bound::positive, "y"}, {"beta", Bound::none, ""}};
    m.eval = [](auto x, auto p, auto out) {
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = p[0] * std::pow(x[i], p[1]);
    };
    m.jacobian = [](auto x, auto p, Eigen::MatrixXd &J) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            double v = std::pow(x[i], p[1]);
            J(i, 0) = v;
            J(i, 1) = p[0] * v * std::log(x[i]);
        }
    };
    m.guess = [](auto x, auto y) {
        std::vector<double> u, v;
        for (std::size_t i = 0; i < x.size(); ++i)
            if (x[i] > 0 && y[i] > 0) {
                u.push_back(std::log(x[i]));
                v.push_back(std::log(y[i]));
            }
        auto [b, a] = line(u, v);
        return std::vector<double>{std::exp(a), b};
    };
    return m;
}

double lorentz(double x, double x0, double w) {
    double h = w / 2, d = x - x0;
    return h * h / (d * d + h * h);
}

// Derivatives of lorentz() w.r.t. x0 and w.
void lorentz_grad(double x, double x0, double w, double &dx0, double &dw) {
    double h = w / 2, d = x - x0;
    double D = d * d + h * h;
    dx0 = 2 * h * h * d / (D * D);
    dw = h * d * d / (D * D);
}

FitModel lorentzian() {
    FitModel m;
    m.name = "lorentzian";
    m.formula = "A*(w/2)^2/((x - x0)^2 + (w/2)^2) + C";
    m.params = {{"A", Bound::none, "y"}, {"x0", Bound::none, "x"}, {"fwhm", Bound::positive, "x"}, {"C", Bound::none, "y"}};
    m.eval = [](auto x, auto p, auto out) {
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = p[0] * lorentz(x[i], p[1], p[2]) + p[3];
    };
    m.jacobian = [](auto x, auto p, Eigen::MatrixXd &J) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            double dx0, dw;
            lorentz_grad(x[i], p[1], p[2], dx0, dw);
            J(i, 0) = lorentz(x[i], p[1], p[2]);
            J(i, 1) = p[0] * dx0;
            J(i, 2) = p[0] * dw;
            J(i, 3) = 1.0;
        }
    };
    m.guess = [](auto x, auto y) {
        double c = *std::min_element(y.begin(), y.end());
        std::size_t k = argmax(y);
        return std::vector<double>{y[k] - c, x[k], half_max_width(x, y, c), c};
    };
    return m;
}

FitModel double_lorentzian() {
    FitModel m;
    m.name = "double_lorentzian";
    m.formula = "A*[L(x; x0 - s/2, w) + L(x; x0 + s/2, w)] + C, L peak-normalized";
    m.params = {{"A", Bound::none, "y"},
                {"x0", Bound::none, "x"},
                {"splitting", Bound::positive, "x"},
                {"fwhm", Bound::positive, "x"},
                {"C", Bound::none, "y"}};
    m.eval = [](auto x, auto p, auto out) {
        for (std::size_t i = 0; i < x.size(); ++i)
            out[i] = p[0] * (lorentz(x[i], p[1] - p[2] / 2, p[3]) + lorentz(x[i], p[1] + p[2] / 2, p[3])) + p[4];
    };
    m.jacobian = [](auto x, auto p, Eigen::MatrixXd &J) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            double a0, aw, b0, bw;
            lorentz_grad(x[i], p[1] - p[2] / 2, p[3], a0, aw);
            lorentz_grad(x[i], p[1] + p[2] / 2, p[3], b0, bw);
            J(i, 0) = lorentz(x[i], p[1] - p[2] / 2, p[3]) + lorentz(x[i], p[1] + p[2] / 2, p[3]);
            J(i, 1) = p[0] * (a0 + b0);
            J(i, 2) = p[0] * (b0 - a0) / 2;
            J(i, 3) = p[0] * (aw + bw);
            J(i, 4) = 1.0;
        }
    };
    m.guess = [](auto x, auto y) {
        double c = *std::min_element(y.begin(), y.end());
        std::size_t k = argmax(y);
        double a = y[k] - c;
        double w = half_max_width(x, y, c);
        // Second peak: highest local maximum clear of the first.
        std::size_t k2 = k;
        for (std::size_t i = 1; i + 1 < y.size(); ++i) {
            bool local = y[i] >= y[i - 1] && y[i] >= y[i + 1];
            if (local && std::abs(x[i] - x[k]) > w / 4 && y[i] - c > 0.3 * a && (k2 == k || y[i] > y[k2])) k2 = i;
        }
        if (k2 == k) return std::vector<double>{a / 2, x[k], w / 2, w / 2, c};
        double s = std::abs(x[k2] - x[k]);
        return std::vector<double>{a, (x[k] + x[k2]) / 2, s, std::max(w - s, s) / 2, c};
    };
    return m;
}

FitModel arcsine_model() {
    FitModel m;
    m.name = "arcsine_lorentzian";
    m.formula = "A*[arcsine(omega) * Lorentzian(fwhm)](x - x0) + C, unit-area lineshape";
    m.params = {{"A", Bound::none, "y*x"},
                {"x0", Bound::none, "x"},
                {"omega", Bound::positive, "x"},
                {"fwhm", Bound::positive, "x"},
                {"C", Bound::none, "y"}};
    m.eval = [](auto x, auto p, auto out) {
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = p[0] * arcsine_lorentzian(x[i] - p[1], p[2], p[3]) + p[4];
    };
    // Finite differences on the quadrature, with steps scaled to the line.
    m.jacobian = [](auto x, auto p, Eigen::MatrixXd &J) {
        const double h0 = 1e-5;
        double hx = h0 * p[3];
        double ho = h0 * std::max(p[2], p[3]);
        double hw = h0 * p[3];
        for (std::size_t i = 0; i < x.size(); ++i) {
            double u = x[i] - p[1];
            J(i, 0) = arcsine_lorentzian(u, p[2], p[3]);
            J(i, 1) = -p[0] * (arcsine_lorentzian(u + hx, p[2], p[3]) - arcsine_lorentzian(u - hx, p[2], p[3])) / (2 * hx);
            double om = std::max(p[2] - ho, 0.0);
            J(i, 2) = p[0] * (arcsine_lorentzian(u, p[2] + ho, p[3]) - arcsine_lorentzian(u, om, p[3])) / (p[2] + ho - om);
            J(i, 3) = p[0] * (arcsine_lorentzian(u, p[2], p[3] + hw) - arcsine_lorentzian(u, p[2], p[3] - hw)) / (2 * hw);
            J(i, 4) = 1.0;
        }
    };
    m.guess = [](auto x, auto y) {
        double c = *std::min_element(y.begin(), y.end());
        std::size_t k = argmax(y);
        double half = c + 0.5 * (y[k] - c);
        double lo = x[k], hi = x[k], area = 0, first = 0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (y[i] > half) {
                lo = std::min(lo, x[i]);
                hi = std::max(hi, x[i]);
            }
            if (i > 0) area += 0.5 * (y[i] + y[i - 1] - 2 * c) * (x[i] - x[i - 1]);
            if (i > 0) first += 0.5 * ((y[i] - c) * x[i] + (y[i - 1] - c) * x[i - 1]) * (x[i] - x[i - 1]);
        }
        double x0 = area != 0 ? first / area : x[k];
        double halfwidth = std::max(hi - x0, x0 - lo);
        double w = std::max(halfwidth / 4, span_of(x) / static_cast<double>(y.size()));
        return std::vector<double>{area, x0, std::max(halfwidth - w / 2, w / 2), w, c};
    };
    return m;
}

FitModel rb_decay() {
    FitModel m;
    m.name = "rb_decay";
    m.formula = "A*P^x";
    m.params = {{"A", Bound::none, "y"}, {"P", Bound::unit_half_open, ""}};
    m.eval = [](auto x, auto p, auto out) {
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = p[0] * std::pow(p[1], x[i]);
    };
    m.jacobian = [](auto x, auto p, Eigen::MatrixXd &J) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            J(i, 0) = std::pow(p[1], x[i]);
            J(i, 1) = x[i] == 0 ? 0.0 : p[0] * x[i] * std::pow(p[1], x[i] - 1);
        }
    };
    m.guess = [](auto x, auto y) {
        std::vector<double> u, v;
        for (std::size_t i = 0; i < x.size(); ++i)
            if (y[i] > 0) {
                u.push_back(x[i]);
                v.push_back(std::log(y[i]));
            }
        auto [b, a] = line(u, v);
        double P = std::clamp(std::exp(b), 1e-3, 1 - 1e-4);
        return std::vector<double>{std::exp(a), P};
    };
    return m;
}

}  // namespace

double arcsine_lorentzian(double x, double omega, double fwhm) {
    require(fwhm > 0, "Lorentzian FWHM must be positive");
    require(omega >= 0, "arcsine half-width must be non-negative");
    const double g = fwhm / 2;
    auto L = [g](double d) { return g / (kPi * (d * d + g * g)); };
    if (omega == 0) return L(x);
    auto f = [&](double th) { return L(x - omega * std::sin(th)) / kPi; };
    // The integrand peaks where omega sin(theta) = x with angular width
    // ~ g / (omega cos(theta)). Panels grow geometrically away from the spike
    // so each one is smooth on its own scale.
    const double lo = -kPi / 2, hi = kPi / 2;
    const double ts = std::asin(std::clamp(x / omega, -1.0, 1.0));
    const double c = std::max(std::cos(ts), std::sqrt(g / omega));
    const double width = std::clamp(g / (omega * c), 1e-12, 0.25);
    std::vector<double> knots = {lo, hi};
    if (ts > lo && ts < hi) knots.push_back(ts);
    for (double d = width / 4; d < kPi; d *= 4) {
        if (ts - d > lo) knots.push_back(ts - d);
        if (ts + d < hi) knots.push_back(ts + d);
    }
    std::sort(knots.begin(), knots.end());
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
        double err = 0;
        sum += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, knots[i], knots[i + 1], 6, 1e-13,
                                                                             &err);
    }
    return sum;
}

const std::vector<FitModel> &model_registry() {
    static const std::vector<FitModel> registry = {exp_decay(),         saturation(),    sine_gaussian(),
                                                   stretched_exp(),     power_law(),     lorentzian(),
                                                   double_lorentzian(), arcsine_model(), rb_decay()};
    return registry;
}

const FitModel &model(const std::string &name) {
    for (const auto &m : model_registry())
        if (m.name == name) return m;
    throw InvalidInput("unknown fit model '" + name + "'");
}

}  // namespace spinlab::fitkit
