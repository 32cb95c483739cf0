#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "dispersion/error.hpp"

namespace dispersion {

inline constexpr double inf_error = std::numeric_limits<double>::infinity();

struct QuadratureOptions {
    double rel_tol = 1e-10;
    unsigned max_depth = 15;
    // Interior points where the integrand is peaked or kinked; the range is
    // split there. Points outside (a, b) are ignored.
    std::vector<double> breakpoints;
};

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;
};

/// Adaptive 31-point Gauss-Kronrod over [a, b]; either end may be infinite.
template <class F>
QuadratureResult integrate(F&& f, double a, double b, const QuadratureOptions& opt = {}) {
    if (!(a < b)) {
        if (a == b) return {};
        throw numerical_error("integrate: reversed limits");
    }
    std::vector<double> cuts{a};
    std::vector<double> bp = opt.breakpoints;
    std::sort(bp.begin(), bp.end());
    for (double x : bp) {
        if (x > cuts.back() && x < b && std::isfinite(x)) cuts.push_back(x);
    }
    cuts.push_back(b);

    const std::function<double(double)> g = [&f](double x) { return f(x); };
    const auto gk = [&](double lo, double hi, unsigned depth, double tol, double& err) {
        try {
            if (std::isfinite(lo) && std::isfinite(hi)) {
                // the adaptive error test is scale-sensitive; work on [-1, 1]
                const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
                const auto h = [&](double t) { return half * g(mid + half * t); };
                return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(h, -1.0, 1.0, depth, tol, &err);
            }
            return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(g, lo, hi, depth, tol, &err);
        } catch (const boost::math::evaluation_error& e) {
            throw numerical_error(std::string("integrate: ") + e.what());
        }
    };

    // rough pass for the scale of the whole integral; each panel then only
    // needs rel_tol relative to that
    const std::size_t panels = cuts.size() - 1;
    std::vector<double> rough(panels);
    double scale = 0.0;
    for (std::size_t i = 0; i < panels; ++i) {
        double err = 0.0;
        rough[i] = gk(cuts[i], cuts[i + 1], 0, opt.rel_tol, err);
        if (std::isfinite(rough[i])) scale += std::fabs(rough[i]);
    }

    QuadratureResult out;
    for (std::size_t i = 0; i < panels; ++i) {
        const double lo = cuts[i], hi = cuts[i + 1];
        const double share = std::max(std::fabs(rough[i]), 1e-300);
        const double tol = std::clamp(opt.rel_tol * scale / share, opt.rel_tol, 0.1);
        double err = 0.0;
        double v = gk(lo, hi, opt.max_depth, tol, err);
        const double target = opt.rel_tol * std::max(scale, std::fabs(v));
        if (!(err <= 100 * target) && err > 1e-15) {
            // endpoint singularities and slow tails: double-exponential rules
            // never sample the ends
            double de_err = inf_error;
            double w = 0.0;
            try {
                if (std::isfinite(lo) && std::isfinite(hi)) {
                    // on [-1, 1] with the distance to the nearer end, so tiny
                    // panels near a singular end keep full resolution
                    static thread_local boost::math::quadrature::tanh_sinh<double> ts;
                    const double half = 0.5 * (hi - lo);
                    const auto h = [&](double t, double tc) {
                        const double d = std::fabs(tc);
                        return half * g(t < 0 ? lo + half * d : hi - half * d);
                    };
                    w = ts.integrate(h, -1.0, 1.0, opt.rel_tol, &de_err);
                } else if (std::isfinite(lo) || std::isfinite(hi)) {
                    static thread_local boost::math::quadrature::exp_sinh<double> es;
                    w = es.integrate(g, lo, hi, opt.rel_tol, &de_err);
                }
            } catch (const std::exception&) {
                de_err = inf_error;
            }
            if (std::isfinite(w) && de_err < err) {
                v = w;
                err = de_err;
            }
        }
        if (!std::isfinite(v)) throw numerical_error("integrate: non-finite result (integral diverges?)");
        out.value += v;
        out.error += err;
    }
    if (out.error > 1e-5 * std::fabs(out.value) + 1e-12) {
        throw numerical_error("integrate: no convergence (error estimate " + std::to_string(out.error) + ")");
    }
    return out;
}

template <class F>
double integrate_value(F&& f, double a, double b, const QuadratureOptions& opt = {}) {
    return integrate(std::forward<F>(f), a, b, opt).value;
}

}  // namespace dispersion
