#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dispersion/error.hpp"
#include "dispersion/interval.hpp"

namespace dispersion::numeric {

inline constexpr double eps = std::numeric_limits<double>::epsilon();
inline const double cbrt_eps = std::cbrt(eps);
inline constexpr double inv_sqrt_two_pi = 0.39894228040143267793994605993438;

/// Step for central differences: cube root of machine epsilon, scaled by |x|.
inline double fd_step(double x) { return std::max(cbrt_eps * std::fabs(x), cbrt_eps); }

/// Shrinks `h` so that x +- reach*h stays inside `iv`; close to a finite end
/// the step scales with the distance to it, since that is where the
/// function varies.
inline double fit_step(const Interval& iv, double x, double h, double reach) {
    const double room = std::min(x - iv.lo, iv.hi - x);
    if (room <= 0) throw domain_error("finite difference: point on the boundary");
    // relative resolution of x on the scale of room
    const double res = std::max(eps, eps * std::fabs(x) / room);
    return std::min({h, 0.9 * room / reach, std::cbrt(res) * room});
}

template <class F>
double first_derivative(F&& f, double x, double h) {
    return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h);
}

/// Five-point central stencil for f''(x).
template <class F>
double second_derivative(F&& f, double x, double h) {
    return (-f(x + 2 * h) + 16 * f(x + h) - 30 * f(x) + 16 * f(x - h) - f(x - 2 * h)) / (12 * h * h);
}

/// Plain k-th central difference, O(h^2).
template <class F>
double central_difference(F&& f, double x, int k, double h) {
    double sum = 0.0;
    double binom = 1.0;
    for (int i = 0; i <= k; ++i) {
        const double sign = (i % 2 == 0) ? 1.0 : -1.0;
        sum += sign * binom * f(x + (0.5 * k - i) * h);
        binom = binom * (k - i) / (i + 1);
    }
    return sum / std::pow(h, k);
}

/// k-th derivative by central differences with three Richardson levels
/// (h, h/2, h/4), cancelling the h^2 and h^4 error terms.
template <class F>
double richardson_derivative(F&& f, double x, int k, double h) {
    const double d1 = central_difference(f, x, k, h);
    const double d2 = central_difference(f, x, k, h / 2);
    const double d3 = central_difference(f, x, k, h / 4);
    const double e1 = (4 * d2 - d1) / 3;
    const double e2 = (4 * d3 - d2) / 3;
    return (16 * e2 - e1) / 15;
}

inline double normal_pdf(double x) { return inv_sqrt_two_pi * std::exp(-0.5 * x * x); }
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// x - log(1 + x), accurate near 0.
inline double x_minus_log1p(double x) {
    if (std::fabs(x) < 1e-2) {
        double term = x, sum = 0.0;
        for (int k = 2; k < 16; ++k) {
            term *= -x;
            sum += -term / k;
        }
        return sum;
    }
    return x - std::log1p(x);
}

/// (1 + x) log(1 + x) - x, accurate near 0. Equals 1 at x = -1.
inline double one_plus_x_log1p_minus_x(double x) {
    if (x == -1.0) return 1.0;
    if (std::fabs(x) < 1e-2) {
        double sum = 0.0, power = x;
        for (int k = 2; k < 16; ++k) {
            power *= x;
            const double sign = (k % 2 == 0) ? 1.0 : -1.0;
            sum += sign * power / (k * (k - 1.0));
        }
        return sum;
    }
    return (1 + x) * std::log1p(x) - x;
}

/// Solves f(x) = target for f strictly increasing on `domain`, starting from
/// x0. Newton steps are taken when they stay inside the current bracket;
/// otherwise bisection. `df` may return a non-positive or non-finite value to
/// force bisection.
template <class F, class DF>
double solve_increasing(F&& f, DF&& df, double target, const Interval& domain, double x0,
                        double tol, int max_iter = 200) {
    if (!domain.contains(x0) || (x0 == domain.lo || x0 == domain.hi)) {
        throw domain_error("root solve: start point outside the open domain");
    }
    int iter = 0;
    double fx0 = f(x0) - target;
    if (std::fabs(fx0) <= tol) return x0;

    double a = x0, b = x0, fa = fx0, fb = fx0;
    const double scale = std::max(1.0, std::fabs(x0));
    double step = scale;
    // Bracket expansion towards the side where the root lies.
    while ((fa > 0 && fb > 0) || (fa < 0 && fb < 0)) {
        if (++iter > max_iter) throw numerical_error("root solve: could not bracket the root");
        if (fx0 < 0) {
            a = b;
            fa = fb;
            b = std::isfinite(domain.hi) ? b + 0.5 * (domain.hi - b) : b + step;
            fb = f(b) - target;
        } else {
            b = a;
            fb = fa;
            a = std::isfinite(domain.lo) ? a - 0.5 * (a - domain.lo) : a - step;
            fa = f(a) - target;
        }
        step *= 2;
        if (std::isnan(fa) || std::isnan(fb)) throw numerical_error("root solve: NaN while bracketing");
    }

    double x = (fx0 < 0) ? a : b;
    double fx = (fx0 < 0) ? fa : fb;
    if (std::fabs(fa) <= tol) return a;
    if (std::fabs(fb) <= tol) return b;
    x = 0.5 * (a + b);
    fx = f(x) - target;
    while (++iter <= max_iter) {
        if (std::fabs(fx) <= tol) return x;
        if (fx < 0) {
            a = x;
        } else {
            b = x;
        }
        if (b - a <= 4 * eps * std::max(1.0, std::fabs(x))) return x;
        const double d = df(x);
        double next = (d > 0 && std::isfinite(d)) ? x - fx / d : a - 1.0;
        if (!(next > a && next < b)) next = 0.5 * (a + b);
        x = next;
        fx = f(x) - target;
    }
    throw numerical_error("root solve: no convergence after " + std::to_string(max_iter) + " iterations");
}

/// Golden-section search for the maximum of a unimodal f on [a, b].
template <class F>
double golden_section_max(F&& f, double a, double b, double tol) {
    const double inv_phi = 0.61803398874989484820;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    return fc >= fd ? c : d;
}

/// Polishes a maximizer x of a smooth f by locating the sign change of the
/// central-difference derivative within [x - radius, x + radius]. Value
/// comparisons alone cannot resolve a maximum better than about sqrt(eps).
template <class F>
double refine_maximum(F&& f, double x, double radius) {
    const double h = cbrt_eps * std::max(1.0, std::fabs(x));
    const auto g = [&](double t) { return (f(t + h) - f(t - h)) / (2 * h); };
    double a = x - radius, b = x + radius;
    double ga = g(a), gb = g(b);
    if (!(ga > 0 && gb < 0)) return x;
    for (int i = 0; i < 200 && b - a > 4 * eps * std::max(1.0, std::fabs(x)); ++i) {
        const double m = 0.5 * (a + b);
        const double gm = g(m);
        if (gm > 0) {
            a = m;
        } else if (gm < 0) {
            b = m;
        } else {
            return m;
        }
    }
    return 0.5 * (a + b);
}

}  // namespace dispersion::numeric
