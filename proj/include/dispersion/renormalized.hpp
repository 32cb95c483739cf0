#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "dispersion/deviance.hpp"
#include "dispersion/quadrature.hpp"

namespace dispersion {

struct SaddlepointResult {
    double value = 0.0;
    double saddle = std::numeric_limits<double>::quiet_NaN();
    bool has_residuals = false;
    double r = std::numeric_limits<double>::quiet_NaN();
    double u = std::numeric_limits<double>::quiet_NaN();
    bool renormalized = false;
};

/// [2 pi tau V(y)]^(-1/2) exp{-d(y; mu)/(2 tau)}.
inline double saddlepoint_kernel(const UnitDeviance& d, const VarianceFunction& V, double y, double mu, double tau) {
    if (!(tau > 0)) throw domain_error("tau must be positive");
    if (!d.circular && !d.support.interior().contains(y)) {
        throw domain_error(d.name + ": saddlepoint needs y in the interior of the support");
    }
    const double v = V(y);
    if (!(v > 0) || !std::isfinite(v)) throw domain_error(d.name + ": V(y) not positive at y=" + std::to_string(y));
    return std::exp(-eval_deviance(d, y, mu) / (2 * tau)) / std::sqrt(two_pi * tau * v);
}

namespace detail {

// Breakpoints around the mode so adaptive quadrature sees the peak.
inline std::vector<double> peak_breakpoints(double mu, double scale, const Interval& iv) {
    std::vector<double> bp;
    for (double k : {-30.0, -10.0, -6.0, -3.0, -1.0, 0.0, 1.0, 3.0, 6.0, 10.0, 30.0}) {
        const double x = mu + k * scale;
        if (x > iv.lo && x < iv.hi) bp.push_back(x);
    }
    // geometric panels toward finite ends, for integrable endpoint singularities
    for (int k = 1; k <= 12; ++k) {
        const double f = std::pow(10.0, -k);
        if (std::isfinite(iv.lo) && mu > iv.lo) bp.push_back(iv.lo + f * (mu - iv.lo));
        if (std::isfinite(iv.hi) && mu < iv.hi) bp.push_back(iv.hi - f * (iv.hi - mu));
    }
    return bp;
}

}  // namespace detail

/// Integral of g over the support of d (one period for circular deviances,
/// lattice sum over interior points for lattice deviances), with quadrature
/// breakpoints placed around mu at multiples of `scale`.
template <class G>
double integrate_over_support(const UnitDeviance& d, G&& g, double mu, double scale, double rel_tol = 1e-11) {
    if (d.circular) {
        const double a = mu - 0.5 * two_pi, b = mu + 0.5 * two_pi;
        QuadratureOptions opt;
        opt.rel_tol = rel_tol;
        opt.breakpoints = detail::peak_breakpoints(mu, scale, Interval::open(a, b));
        return integrate_value(g, a, b, opt);
    }
    if (d.lattice) {
        const double start = std::isfinite(d.support.lo) ? std::ceil(d.support.lo) : std::floor(mu) - 1e6;
        double total = 0.0;
        const double peak_index = std::floor(mu);
        double peak_term = 0.0;
        for (double k = start; k <= d.support.hi; k += 1.0) {
            if (!d.support.contains(k)) continue;
            const double term = g(k);
            total += term;
            peak_term = std::max(peak_term, term);
            if (k > peak_index && term < 1e-17 * total) break;
            if (k - start > 1e7) throw numerical_error("lattice sum did not converge");
        }
        return total;
    }
    QuadratureOptions opt;
    opt.rel_tol = rel_tol;
    opt.breakpoints = detail::peak_breakpoints(mu, scale, d.support);
    return integrate_value(g, d.support.lo, d.support.hi, opt);
}

/// a0(mu, tau) = 1 / integral of the saddlepoint kernel.
inline double renormalizing_constant(const UnitDeviance& d, const VarianceFunction& V, double mu, double tau) {
    const double scale = std::sqrt(tau * V(mu));
    const double total = integrate_over_support(
        d,
        [&](double x) {
            if (!d.circular && !d.support.interior().contains(x)) return 0.0;
            const double v = V(x);
            if (!(v > 0)) return 0.0;
            return std::exp(-eval_deviance(d, x, mu) / (2 * tau)) / std::sqrt(two_pi * tau * v);
        },
        mu, scale);
    if (!(total > 0) || !std::isfinite(total)) throw numerical_error(d.name + ": saddlepoint kernel is not integrable");
    return 1.0 / total;
}

inline SaddlepointResult renormalized_saddlepoint(const UnitDeviance& d, const VarianceFunction& V, double y, double mu,
                                                  double tau) {
    SaddlepointResult out;
    out.value = saddlepoint_kernel(d, V, y, mu, tau) * renormalizing_constant(d, V, mu, tau);
    out.renormalized = true;
    return out;
}

}  // namespace dispersion
