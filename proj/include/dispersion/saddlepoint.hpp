#pragma once

#include <algorithm>
#include <cmath>

#include "dispersion/edm.hpp"
#include "dispersion/numeric.hpp"
#include "dispersion/renormalized.hpp"

namespace dispersion {

/// |r| below which 1/r - 1/u is replaced by its limit; blended linearly up to
/// lr_blend_hi.
inline constexpr double lr_blend_lo = 1e-5;
inline constexpr double lr_blend_hi = 1e-4;

namespace detail {

inline void check_interior(const EdmFamily& f, double y) {
    if (!f.support.interior().contains(y)) {
        throw domain_error(f.name + ": y=" + std::to_string(y) + " is not in the interior of the support");
    }
}

// 1/r - 1/u on the deviance scale, with the y -> mu limit V'(mu)/(6 sqrt V(mu)).
inline double lr_correction(double r, double u, double limit) {
    const double a = std::fabs(r);
    if (a < lr_blend_lo || u == 0.0) return limit;
    const double exact = 1 / r - 1 / u;
    if (a >= lr_blend_hi) return exact;
    const double w = (a - lr_blend_lo) / (lr_blend_hi - lr_blend_lo);
    return w * exact + (1 - w) * limit;
}

inline double clamp_probability(double p) {
    if (p < -1e-12 || p > 1 + 1e-12) throw numerical_error("approximate probability outside [0, 1]: " + std::to_string(p));
    return std::clamp(p, 0.0, 1.0);
}

}  // namespace detail

/// [2 pi tau V(y)]^(-1/2) exp{-d(y; mu)/(2 tau)} with saddle (q(y) - theta)/tau.
inline SaddlepointResult saddlepoint_density(const EdmFamily& f, double y, double theta, double tau) {
    detail::check_theta(f, theta);
    detail::check_tau(f, tau);
    detail::check_interior(f, y);
    const double v = variance_function(f, y);
    if (!(v > 0)) throw domain_error(f.name + ": V(y) is not positive");
    const double mu = mean_value(f, theta);
    SaddlepointResult out;
    out.value = std::exp(-edm_deviance(f, y, mu) / (2 * tau)) / std::sqrt(two_pi * tau * v);
    out.saddle = (inverse_mean(f, y) - theta) / tau;
    return out;
}

inline SaddlepointResult renormalized_saddlepoint(const EdmFamily& f, double y, double theta, double tau) {
    detail::check_theta(f, theta);
    detail::check_tau(f, tau);
    detail::check_interior(f, y);
    const double mu = mean_value(f, theta);
    auto out = renormalized_saddlepoint(edm_unit_deviance(f), edm_variance(f), y, mu, tau);
    out.saddle = (inverse_mean(f, y) - theta) / tau;
    return out;
}

/// Lugannani-Rice: Phi(r/sqrt(tau)) + sqrt(tau) phi(r/sqrt(tau)) (1/r - 1/u)
/// with r = sgn(y - mu) sqrt(d(y; mu)) and u = V(y)^(1/2) dd/dy / 2.
inline SaddlepointResult lugannani_rice(const EdmFamily& f, double y, double theta, double tau) {
    detail::check_theta(f, theta);
    detail::check_tau(f, tau);
    detail::check_interior(f, y);
    const double mu = mean_value(f, theta);
    const double d = edm_deviance(f, y, mu);
    const double r = (y > mu ? 1.0 : (y < mu ? -1.0 : 0.0)) * std::sqrt(d);
    const double qy = inverse_mean(f, y);
    const double u = std::sqrt(variance_function(f, y)) * (qy - theta);
    const double limit = variance_derivative(f, mu) / (6 * std::sqrt(variance_function(f, mu)));
    const double s = std::sqrt(tau);
    const double z = r / s;
    SaddlepointResult out;
    out.value = detail::clamp_probability(numeric::normal_cdf(z) +
                                          s * numeric::normal_pdf(z) * detail::lr_correction(r, u, limit));
    out.saddle = (qy - theta) / tau;
    out.has_residuals = true;
    out.r = r;
    out.u = u;
    return out;
}

inline double lugannani_rice_cdf(const EdmFamily& f, double y, double theta, double tau) {
    return lugannani_rice(f, y, theta, tau).value;
}

/// Lugannani-Rice for the mean of n draws: solves K'(t) = y by safeguarded
/// Newton from t = 0, then Phi(r) + phi(r)(1/r - 1/u) with
/// r = sgn(t) sqrt(2n[y t - K(t)]) and u = t sqrt(n K''(t)).
inline SaddlepointResult sample_mean_lugannani_rice(const EdmFamily& f, double y, double theta, double tau, long n) {
    if (n < 1) throw domain_error("sample size must be positive");
    detail::check_theta(f, theta);
    detail::check_tau(f, tau);
    detail::check_interior(f, y);
    const double nn = static_cast<double>(n);
    const Interval& th = f.theta_domain;
    const Interval t_dom = Interval::open((th.lo - theta) / tau, (th.hi - theta) / tau);
    const auto k1 = [&](double t) { return b_prime(f, theta + tau * t); };
    const auto k2 = [&](double t) { return tau * b_second(f, theta + tau * t); };
    const double t = numeric::solve_increasing(k1, k2, y, t_dom, 0.0, 1e-14 * std::max(1.0, std::fabs(y)), 200);

    const double mu = mean_value(f, theta);
    double half_dev = t == 0.0 ? 0.0 : y * t - cgf(f, t, theta, tau);  // y t - K(t) = d(y; mu)/(2 tau)
    if (std::fabs(half_dev) < 1e-6 * std::fabs(y * t)) half_dev = edm_deviance(f, y, mu) / (2 * tau);
    half_dev = std::max(0.0, half_dev);
    const double sgn = t > 0 ? 1.0 : (t < 0 ? -1.0 : 0.0);
    const double r = sgn * std::sqrt(2 * nn * half_dev);
    const double u = t * std::sqrt(nn * k2(t));
    const double scale = std::sqrt(tau / nn);  // r * scale is the deviance-scale residual
    const double limit = variance_derivative(f, mu) / (6 * std::sqrt(variance_function(f, mu)));
    double corr;
    const double a = std::fabs(r * scale);
    if (a < lr_blend_lo || u == 0.0) {
        corr = scale * limit;
    } else {
        const double exact = 1 / r - 1 / u;
        if (a >= lr_blend_hi) {
            corr = exact;
        } else {
            const double w = (a - lr_blend_lo) / (lr_blend_hi - lr_blend_lo);
            corr = w * exact + (1 - w) * scale * limit;
        }
    }
    SaddlepointResult out;
    out.value = detail::clamp_probability(numeric::normal_cdf(r) + numeric::normal_pdf(r) * corr);
    out.saddle = t;
    out.has_residuals = true;
    out.r = r;
    out.u = u;
    return out;
}

inline double sample_mean_cdf(const EdmFamily& f, double y, double theta, double tau, long n) {
    return sample_mean_lugannani_rice(f, y, theta, tau, n).value;
}

}  // namespace dispersion
