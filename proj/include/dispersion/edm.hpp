#pragma once

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/special_functions/digamma.hpp>

#include "dispersion/deviance.hpp"
#include "dispersion/error.hpp"
#include "dispersion/interval.hpp"
#include "dispersion/numeric.hpp"
#include "dispersion/quadrature.hpp"
#include "dispersion/renormalized.hpp"

namespace dispersion {

/// Exponential dispersion model exp{[y theta - b(theta)]/tau + c(y; tau)}.
/// Only `b` is mandatory; every other callable is an optional analytic
/// shortcut and falls back to finite differences, root solving or quadrature.
struct EdmFamily {
    std::string name;
    Interval theta_domain = Interval::real_line();
    Interval mean_domain = Interval::real_line();
    Interval support = Interval::real_line();  // convex support
    bool lattice = false;                      // integer points of `support`
    Interval dispersion = Interval::positive();
    bool unit_dispersion = false;  // tau fixed at 1
    double theta_start = 0.0;      // start for numeric inverse of b'

    std::function<double(double)> b;
    std::function<double(double)> b1;
    std::function<double(double)> b2;
    std::function<double(double, int)> b_derivative;  // r-th derivative, r >= 1
    std::function<double(double)> q;                  // inverse of b'
    std::function<double(double)> V;                  // b''(q(mu))
    std::function<double(double)> dV;                 // V'(mu)
    std::function<double(double, double)> deviance;   // closed form d(y; mu)
    std::function<double(double, double)> log_normalizer;  // c(y; tau)
    std::function<double(double, double)> dc_dtau;
};

namespace detail {

inline void check_theta(const EdmFamily& f, double theta) {
    if (!f.theta_domain.interior().contains(theta)) {
        std::ostringstream os;
        os << f.name << ": theta=" << theta << " outside canonical domain " << f.theta_domain.str();
        throw domain_error(os.str());
    }
}

inline void check_tau(const EdmFamily& f, double tau) {
    if (f.unit_dispersion) {
        if (tau != 1.0) throw domain_error(f.name + ": dispersion is fixed at tau=1");
        return;
    }
    if (!f.dispersion.contains(tau)) {
        std::ostringstream os;
        os << f.name << ": tau=" << tau << " outside dispersion domain " << f.dispersion.str();
        throw domain_error(os.str());
    }
}

inline void check_mu(const EdmFamily& f, double mu) {
    if (!f.mean_domain.contains(mu)) {
        std::ostringstream os;
        os << f.name << ": mu=" << mu << " outside mean domain " << f.mean_domain.str();
        throw domain_error(os.str());
    }
}

inline void check_y(const EdmFamily& f, double y) {
    if (!f.support.contains(y)) {
        std::ostringstream os;
        os << f.name << ": y=" << y << " outside support " << f.support.str();
        throw domain_error(os.str());
    }
}

// Richardson base step: small against both |theta| and the distance to the
// edge of the canonical domain, where b is typically singular.
inline double theta_step(const EdmFamily& f, double theta, double base) {
    const Interval& iv = f.theta_domain;
    const double room = std::min(theta - iv.lo, iv.hi - theta);
    return std::min(base * std::max(1.0, std::fabs(theta)), 0.05 * room);
}

}  // namespace detail

inline double b_value(const EdmFamily& f, double theta) {
    detail::check_theta(f, theta);
    return f.b(theta);
}

inline double b_prime(const EdmFamily& f, double theta) {
    detail::check_theta(f, theta);
    if (f.b1) return f.b1(theta);
    if (f.b_derivative) return f.b_derivative(theta, 1);
    return numeric::richardson_derivative(f.b, theta, 1, detail::theta_step(f, theta, 0.02));
}

inline double b_second(const EdmFamily& f, double theta) {
    detail::check_theta(f, theta);
    if (f.b2) return f.b2(theta);
    if (f.b_derivative) return f.b_derivative(theta, 2);
    if (f.b1) return numeric::richardson_derivative(f.b1, theta, 1, detail::theta_step(f, theta, 0.02));
    return numeric::richardson_derivative(f.b, theta, 2, detail::theta_step(f, theta, 0.05));
}

/// K(t; theta, tau) = [b(theta + tau t) - b(theta)] / tau.
inline double cgf(const EdmFamily& f, double t, double theta, double tau) {
    detail::check_theta(f, theta);
    detail::check_tau(f, tau);
    const double shifted = theta + tau * t;
    if (!f.theta_domain.interior().contains(shifted)) {
        std::ostringstream os;
        os << f.name << ": cgf does not exist at t=" << t << " (theta + tau t leaves the canonical domain)";
        throw domain_error(os.str());
    }
    if (t == 0.0) return 0.0;
    return (f.b(shifted) - f.b(theta)) / tau;
}

inline double mean_value(const EdmFamily& f, double theta) { return b_prime(f, theta); }

inline double inverse_mean(const EdmFamily& f, double mu) {
    detail::check_mu(f, mu);
    if (f.q) return f.q(mu);
    const double tol = 1e-10 * std::max(1.0, std::fabs(mu));
    return numeric::solve_increasing([&f](double t) { return b_prime(f, t); },
                                     [&f](double t) { return b_second(f, t); }, mu, f.theta_domain.interior(),
                                     f.theta_start, tol, 200);
}

inline double variance_function(const EdmFamily& f, double mu) {
    detail::check_mu(f, mu);
    if (f.V) return f.V(mu);
    return b_second(f, inverse_mean(f, mu));
}

/// V'(mu) = b'''(theta) / b''(theta).
inline double variance_derivative(const EdmFamily& f, double mu);

/// kappa_r = tau^(r-1) b^(r)(theta).
inline double cumulant(const EdmFamily& f, int r, double theta, double tau) {
    if (r < 1) throw domain_error("cumulant order must be >= 1");
    detail::check_theta(f, theta);
    detail::check_tau(f, tau);
    double deriv = 0.0;
    if (r == 1) {
        deriv = b_prime(f, theta);
    } else if (r == 2) {
        deriv = b_second(f, theta);
    } else if (f.b_derivative) {
        deriv = f.b_derivative(theta, r);
    } else {
        if (r > 6) throw numerical_error(f.name + ": cumulant of order > 6 needs an analytic derivative of b");
        // Richardson-extrapolated differences of b'' (or b when b'' is unknown)
        const bool have_b2 = static_cast<bool>(f.b2);
        const int k = have_b2 ? r - 2 : r;
        const auto g = [&f, have_b2](double t) { return have_b2 ? f.b2(t) : f.b(t); };
        const double h = detail::theta_step(f, theta, 0.05);
        deriv = numeric::richardson_derivative(g, theta, k, h);
    }
    return std::pow(tau, r - 1) * deriv;
}

inline double variance_derivative(const EdmFamily& f, double mu) {
    detail::check_mu(f, mu);
    if (f.dV) return f.dV(mu);
    const double theta = inverse_mean(f, mu);
    return cumulant(f, 3, theta, 1.0) / b_second(f, theta);
}

/// 2 * integral from mu to y of (y - t)/V(t) dt.
inline double edm_deviance_by_quadrature(const EdmFamily& f, double y, double mu) {
    detail::check_y(f, y);
    detail::check_mu(f, mu);
    if (y == mu) return 0.0;
    const double a = std::min(y, mu), b = std::max(y, mu);
    const auto integrand = [&](double t) {
        const double v = variance_function(f, t);
        if (!(v > 0) || !std::isfinite(v)) throw numerical_error(f.name + ": V vanishes on the integration path");
        return std::fabs(y - t) / v;
    };
    return 2 * integrate_value(integrand, a, b);
}

inline double edm_deviance(const EdmFamily& f, double y, double mu) {
    detail::check_y(f, y);
    detail::check_mu(f, mu);
    if (y == mu) return 0.0;
    if (f.deviance) return std::max(0.0, f.deviance(y, mu));
    // Far from the diagonal, 2[y(q(y) - q(mu)) - b(q(y)) + b(q(mu))] is exact
    // and much cheaper; close to it the quadrature avoids cancellation.
    if (f.mean_domain.interior().contains(y) && std::fabs(y - mu) > 1e-2 * (std::fabs(mu) + 1e-3)) {
        const double ty = inverse_mean(f, y), tm = inverse_mean(f, mu);
        return std::max(0.0, 2 * (y * (ty - tm) - f.b(ty) + f.b(tm)));
    }
    return edm_deviance_by_quadrature(f, y, mu);
}

inline VarianceFunction edm_variance(const EdmFamily& f) {
    return {f.mean_domain, [f](double mu) { return variance_function(f, mu); }};
}

/// The family's unit deviance, with d2 = 2/V and dd/dy = 2[q(y) - q(mu)].
inline UnitDeviance edm_unit_deviance(const EdmFamily& f) {
    UnitDeviance d;
    d.name = f.name;
    d.support = f.support;
    d.domain = f.mean_domain;
    d.lattice = f.lattice;
    d.eval = [f](double y, double mu) { return edm_deviance(f, y, mu); };
    d.d2_diag = [f](double mu) { return 2 / variance_function(f, mu); };
    d.d_dy = [f](double y, double mu) { return 2 * (inverse_mean(f, y) - inverse_mean(f, mu)); };
    return d;
}

struct DensityValue {
    double value = 0.0;
    bool approximate = false;
};

inline bool is_lattice_point(double y) { return std::isfinite(y) && y == std::floor(y); }

inline double log_density_exact(const EdmFamily& f, double y, double theta, double tau) {
    detail::check_theta(f, theta);
    detail::check_tau(f, tau);
    detail::check_y(f, y);
    if (f.lattice && !is_lattice_point(y)) throw domain_error(f.name + ": density needs an integer y");
    if (!f.log_normalizer) throw domain_error(f.name + ": no exact normalizer");
    const double lin = (y == 0.0) ? -f.b(theta) : y * theta - f.b(theta);
    return lin / tau + f.log_normalizer(y, tau);
}

/// Exact density when c(y; tau) is known, otherwise the renormalized
/// saddlepoint value flagged as approximate.
inline DensityValue density(const EdmFamily& f, double y, double theta, double tau) {
    if (f.log_normalizer) return {std::exp(log_density_exact(f, y, theta, tau)), false};
    detail::check_theta(f, theta);
    detail::check_tau(f, tau);
    detail::check_y(f, y);
    if (f.lattice && !is_lattice_point(y)) throw domain_error(f.name + ": density needs an integer y");
    const double mu = mean_value(f, theta);
    const auto r = renormalized_saddlepoint(edm_unit_deviance(f), edm_variance(f), y, mu, tau);
    return {r.value, true};
}

/// Parameters (theta, tau/n) of the mean of n iid draws.
inline std::pair<double, double> sample_mean_family(const EdmFamily& f, double theta, double tau, long n) {
    if (n < 1) throw domain_error("sample size must be positive");
    detail::check_theta(f, theta);
    detail::check_tau(f, tau);
    const double t = tau / static_cast<double>(n);
    if (f.unit_dispersion && n != 1) {
        throw domain_error(f.name + ": tau/n is outside the dispersion domain (tau fixed at 1)");
    }
    if (!f.unit_dispersion && !f.dispersion.contains(t)) throw domain_error(f.name + ": tau/n outside the dispersion domain");
    return {theta, t};
}

/// l(y; y) = y q(y) - b(q(y)); zero at boundary points of the mean domain.
inline double saturated_loglik(const EdmFamily& f, double y) {
    if (!f.mean_domain.contains(y)) {
        if (f.support.contains(y)) return 0.0;
        throw domain_error(f.name + ": y outside support");
    }
    const double th = inverse_mean(f, y);
    return y * th - f.b(th);
}

/// Cumulant generating function of Z = (Y - mu)/sqrt(tau).
inline double standardized_cgf(const EdmFamily& f, double t, double mu, double tau) {
    const double theta = inverse_mean(f, mu);
    const double s = std::sqrt(tau);
    return cgf(f, t / s, theta, tau) - mu * t / s;
}

// Built-in families

inline EdmFamily normal_family() {
    EdmFamily f;
    f.name = "normal";
    f.b = [](double t) { return 0.5 * t * t; };
    f.b1 = [](double t) { return t; };
    f.b2 = [](double) { return 1.0; };
    f.b_derivative = [](double t, int r) { return r == 1 ? t : (r == 2 ? 1.0 : 0.0); };
    f.q = [](double m) { return m; };
    f.V = [](double) { return 1.0; };
    f.dV = [](double) { return 0.0; };
    f.deviance = [](double y, double m) { return (y - m) * (y - m); };
    f.log_normalizer = [](double y, double tau) { return -y * y / (2 * tau) - 0.5 * std::log(two_pi * tau); };
    f.dc_dtau = [](double y, double tau) { return y * y / (2 * tau * tau) - 1 / (2 * tau); };
    return f;
}

inline EdmFamily gamma_family() {
    EdmFamily f;
    f.name = "gamma";
    f.theta_domain = Interval::open(-inf, 0.0);
    f.mean_domain = f.support = Interval::positive();
    f.theta_start = -1.0;
    f.b = [](double t) { return -std::log(-t); };
    f.b1 = [](double t) { return -1 / t; };
    f.b2 = [](double t) { return 1 / (t * t); };
    f.b_derivative = [](double t, int r) { return std::tgamma(r) * std::pow(-t, -r); };
    f.q = [](double m) { return -1 / m; };
    f.V = [](double m) { return m * m; };
    f.dV = [](double m) { return 2 * m; };
    f.deviance = [](double y, double m) { return 2 * numeric::x_minus_log1p((y - m) / m); };
    f.log_normalizer = [](double y, double tau) {
        const double s = 1 / tau;
        return s * std::log(s) + (s - 1) * std::log(y) - std::lgamma(s);
    };
    f.dc_dtau = [](double y, double tau) {
        return (std::log(tau) - 1 + boost::math::digamma(1 / tau) - std::log(y)) / (tau * tau);
    };
    return f;
}

inline EdmFamily inverse_gaussian_family() {
    EdmFamily f;
    f.name = "inverse_gaussian";
    f.theta_domain = Interval::open(-inf, 0.0);
    f.mean_domain = f.support = Interval::positive();
    f.theta_start = -0.5;
    f.b = [](double t) { return -std::sqrt(-2 * t); };
    f.b1 = [](double t) { return 1 / std::sqrt(-2 * t); };
    f.b2 = [](double t) { return std::pow(-2 * t, -1.5); };
    f.b_derivative = [](double t, int r) {
        double dfact = 1.0;  // (2r-3)!!
        for (int k = 2 * r - 3; k > 1; k -= 2) dfact *= k;
        return dfact * std::pow(-2 * t, -(2 * r - 1) / 2.0);
    };
    f.q = [](double m) { return -1 / (2 * m * m); };
    f.V = [](double m) { return m * m * m; };
    f.dV = [](double m) { return 3 * m * m; };
    f.deviance = [](double y, double m) { return (y - m) * (y - m) / (m * m * y); };
    f.log_normalizer = [](double y, double tau) {
        return -0.5 * std::log(two_pi * tau * y * y * y) - 1 / (2 * tau * y);
    };
    f.dc_dtau = [](double y, double tau) { return -1 / (2 * tau) + 1 / (2 * tau * tau * y); };
    return f;
}

inline EdmFamily poisson_family() {
    EdmFamily f;
    f.name = "poisson";
    f.mean_domain = Interval::positive();
    f.support = Interval::nonnegative();
    f.lattice = true;
    f.unit_dispersion = true;
    f.b = [](double t) { return std::exp(t); };
    f.b1 = f.b2 = f.b;
    f.b_derivative = [](double t, int) { return std::exp(t); };
    f.q = [](double m) { return std::log(m); };
    f.V = [](double m) { return m; };
    f.dV = [](double) { return 1.0; };
    f.deviance = [](double y, double m) { return 2 * m * numeric::one_plus_x_log1p_minus_x((y - m) / m); };
    f.log_normalizer = [](double y, double) { return -std::lgamma(y + 1); };
    return f;
}

namespace detail {

inline double xlog_ratio(double a, double b) { return a == 0.0 ? 0.0 : a * std::log(a / b); }

}  // namespace detail

inline EdmFamily binomial_family() {
    EdmFamily f;
    f.name = "binomial";
    f.mean_domain = Interval::open(0.0, 1.0);
    f.support = Interval::closed(0.0, 1.0);
    f.lattice = true;
    f.unit_dispersion = true;
    f.b = [](double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); };
    f.b1 = [](double t) { return 1 / (1 + std::exp(-t)); };
    f.b2 = [](double t) {
        const double p = 1 / (1 + std::exp(-t));
        return p * (1 - p);
    };
    f.q = [](double m) { return std::log(m / (1 - m)); };
    f.V = [](double m) { return m * (1 - m); };
    f.dV = [](double m) { return 1 - 2 * m; };
    f.deviance = [](double y, double m) {
        if (y == 0.0 || y == 1.0) return 2 * (detail::xlog_ratio(y, m) + detail::xlog_ratio(1 - y, 1 - m));
        const double r = y - m;
        return 2 * (m * numeric::one_plus_x_log1p_minus_x(r / m) +
                    (1 - m) * numeric::one_plus_x_log1p_minus_x(-r / (1 - m)));
    };
    f.log_normalizer = [](double, double) { return 0.0; };
    return f;
}

inline EdmFamily negative_binomial_family() {
    EdmFamily f;
    f.name = "negative_binomial";
    f.theta_domain = Interval::open(-inf, 0.0);
    f.mean_domain = Interval::positive();
    f.support = Interval::nonnegative();
    f.lattice = true;
    f.unit_dispersion = true;
    f.theta_start = -1.0;
    f.b = [](double t) { return -std::log(-std::expm1(t)); };
    f.b1 = [](double t) { return 1 / std::expm1(-t); };
    f.b2 = [](double t) {
        const double m = 1 / std::expm1(-t);
        return m * (1 + m);
    };
    f.q = [](double m) { return -std::log1p(1 / m); };
    f.V = [](double m) { return m * (1 + m); };
    f.dV = [](double m) { return 1 + 2 * m; };
    f.deviance = [](double y, double m) {
        // m phi(r/m) - (1+m) phi(r/(1+m)) with phi(x) = (1+x)log(1+x) - x
        if (y == 0.0) return 2 * std::log1p(m);
        const double r = y - m;
        return 2 * (m * numeric::one_plus_x_log1p_minus_x(r / m) -
                    (1 + m) * numeric::one_plus_x_log1p_minus_x(r / (1 + m)));
    };
    f.log_normalizer = [](double, double) { return 0.0; };
    return f;
}

/// log of the generalized secant hyperbolic normalizer
///   c(y; tau) = log[2^((1-2tau)/tau) Gamma(1/(2tau))^2 / (pi tau Gamma(1/tau))]
///               - sum_{j>=0} log[1 + y^2/(1 + 2j tau)^2].
/// With a = 1/(2tau), b = y/(2tau) the summand is log(1 + b^2/(j+a)^2). The
/// first J terms are summed directly and the rest by Euler-Maclaurin (tail
/// integral plus f/2, f'/12, f'''/720 corrections); J is the smallest count
/// with max(b^2, 1)/(J+a)^5 < 1e-14, capped at 1e6. `terms` overrides J.
inline double gsh_log_normalizer(double y, double tau, std::size_t terms = 0) {
    if (!(tau > 0)) throw domain_error("gsh: tau must be positive");
    const double a = 1 / (2 * tau);
    const double bb = std::fabs(y) / (2 * tau);
    const double pre = ((1 - 2 * tau) / tau) * std::log(2.0) + 2 * std::lgamma(a) - std::log(M_PI) - std::log(tau) -
                       std::lgamma(1 / tau);
    if (bb == 0.0) return pre;
    std::size_t J = terms;
    if (J == 0) {
        const double need = std::pow(std::max(bb * bb, 1.0) / 1e-14, 0.2) - a;
        J = static_cast<std::size_t>(std::clamp(std::ceil(need), 1.0, 1e6));
    }
    const double b2 = bb * bb;
    double sum = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
        const double u = static_cast<double>(j) + a;
        sum += std::log1p(b2 / (u * u));
    }
    const double U = static_cast<double>(J) + a;
    const double s = U * U + b2;
    const double f0 = std::log1p(b2 / (U * U));
    const double f1 = 2 * U / s - 2 / U;
    const double f3 = 4 * U * (U * U - 3 * b2) / (s * s * s) - 4 / (U * U * U);
    const double tail = 2 * bb * std::atan(bb / U) - U * f0;
    sum += tail + 0.5 * f0 - f1 / 12 + f3 / 720;
    return pre - sum;
}

inline EdmFamily gsh_family() {
    EdmFamily f;
    f.name = "gsh";
    f.theta_domain = Interval::open(-M_PI / 2, M_PI / 2);
    f.b = [](double t) { return -std::log(std::cos(t)); };
    f.b1 = [](double t) { return std::tan(t); };
    f.b2 = [](double t) {
        const double c = std::cos(t);
        return 1 / (c * c);
    };
    f.q = [](double m) { return std::atan(m); };
    f.V = [](double m) { return 1 + m * m; };
    f.dV = [](double m) { return 2 * m; };
    f.deviance = [](double y, double m) {
        const double r = y - m;
        if (std::fabs(r) < 0.1 * (1 + std::fabs(m))) {
            // the closed form cancels here; 2 int (y - t)/(1 + t^2) by 10-point Gauss-Legendre
            return 2 * boost::math::quadrature::gauss<double, 10>::integrate(
                           [&](double t) { return (y - t) / (1 + t * t); }, m, y);
        }
        return 2 * (y * (std::atan(y) - std::atan(m)) - 0.5 * std::log1p(r * (y + m) / (1 + m * m)));
    };
    f.log_normalizer = [](double y, double tau) { return gsh_log_normalizer(y, tau); };
    return f;
}

struct MorrisSpec {
    double a = 0.0, b = 0.0, c = 0.0;
};

/// The six quadratic variance functions V = a mu^2 + b mu + c (exact match).
inline EdmFamily morris_family(const MorrisSpec& s) {
    const auto is = [&s](double a, double b, double c) { return s.a == a && s.b == b && s.c == c; };
    if (is(0, 0, 1)) return normal_family();
    if (is(1, 0, 0)) return gamma_family();
    if (is(0, 1, 0)) return poisson_family();
    if (is(-1, 1, 0)) return binomial_family();
    if (is(1, 1, 0)) return negative_binomial_family();
    if (is(1, 0, 1)) return gsh_family();
    std::ostringstream os;
    os << "variance function " << s.a << " mu^2 + " << s.b << " mu + " << s.c
       << " is not one of the six quadratic-variance natural exponential families";
    throw domain_error(os.str());
}

inline std::vector<std::string> family_names() {
    return {"normal", "gamma", "inverse_gaussian", "poisson", "binomial", "negative_binomial", "gsh"};
}

inline EdmFamily family_by_name(const std::string& name) {
    if (name == "normal") return normal_family();
    if (name == "gamma") return gamma_family();
    if (name == "inverse_gaussian" || name == "ig") return inverse_gaussian_family();
    if (name == "poisson") return poisson_family();
    if (name == "binomial") return binomial_family();
    if (name == "negative_binomial" || name == "negbin") return negative_binomial_family();
    if (name == "gsh") return gsh_family();
    throw domain_error("unknown family '" + name + "'");
}

}  // namespace dispersion
