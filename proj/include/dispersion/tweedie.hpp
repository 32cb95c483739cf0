#pragma once

#include <cmath>
#include <sstream>
#include <string>

#include "dispersion/edm.hpp"
#include "dispersion/error.hpp"
#include "dispersion/numeric.hpp"
#include "dispersion/quadrature.hpp"

namespace dispersion {

/// Width of the window around p = 1 and p = 2 where limit formulas are used.
inline constexpr double tweedie_limit_width = 1e-6;

namespace detail {

inline void check_power(double p) {
    if (!std::isfinite(p)) throw domain_error("tweedie: p must be finite");
    if (p > 0 && p < 1) throw domain_error("tweedie: no exponential dispersion model exists for 0 < p < 1");
}

inline bool near(double p, double target) { return std::fabs(p - target) < tweedie_limit_width; }

}  // namespace detail

/// Canonical domain of the Tweedie cumulant generator.
inline Interval tweedie_theta_domain(double p) {
    detail::check_power(p);
    if (p == 0 || p == 1) return Interval::real_line();
    if (p < 0) return Interval::positive();
    return Interval::open(-inf, 0.0);
}

inline Interval tweedie_mean_domain(double p) {
    detail::check_power(p);
    return p == 0 ? Interval::real_line() : Interval::positive();
}

inline Interval tweedie_support(double p) {
    detail::check_power(p);
    if (p <= 0) return Interval::real_line();
    if (p < 2) return Interval::nonnegative();
    return Interval::positive();
}

/// b_p(theta) = [(1-p) theta]^((p-2)/(p-1)) / (2-p); e^theta at p = 1 and
/// -log(-theta) at p = 2.
inline double tweedie_cumulant_generator(double p, double theta) {
    if (!tweedie_theta_domain(p).contains(theta)) {
        std::ostringstream os;
        os << "tweedie: theta=" << theta << " outside the canonical domain for p=" << p;
        throw domain_error(os.str());
    }
    if (p == 0) return 0.5 * theta * theta;
    if (p == 1) return std::exp(theta);
    if (p == 2) return -std::log(-theta);
    return std::pow((1 - p) * theta, (p - 2) / (p - 1)) / (2 - p);
}

inline double tweedie_mean(double p, double theta) {
    if (p == 0) return theta;
    if (p == 1) return std::exp(theta);
    if (p == 2) return -1 / theta;
    return std::pow((1 - p) * theta, 1 / (1 - p));
}

inline double tweedie_theta(double p, double mu) {
    if (p == 0) return mu;
    if (p == 1) return std::log(mu);
    if (p == 2) return -1 / mu;
    return std::pow(mu, 1 - p) / (1 - p);
}

// kappa_p(mu) := b_p(theta(mu)) = mu^(2-p)/(2-p), log mu at p = 2.
inline double tweedie_kappa(double p, double mu) {
    if (p == 2) return std::log(mu);
    if (p == 1) return mu;
    return std::pow(mu, 2 - p) / (2 - p);
}

inline double tweedie_deviance(double p, double y, double mu) {
    detail::check_power(p);
    if (!tweedie_support(p).contains(y)) {
        std::ostringstream os;
        os << "tweedie: y=" << y << " outside the support for p=" << p;
        throw domain_error(os.str());
    }
    if (!tweedie_mean_domain(p).contains(mu)) throw domain_error("tweedie: mu outside the mean domain");
    if (y == mu) return 0.0;
    if (p == 0) return (y - mu) * (y - mu);
    if (detail::near(p, 1)) return 2 * mu * numeric::one_plus_x_log1p_minus_x((y - mu) / mu);
    if (detail::near(p, 2)) return 2 * numeric::x_minus_log1p((y - mu) / mu);
    const double yp = std::max(y, 0.0);
    const double v = 2 * (std::pow(yp, 2 - p) / ((1 - p) * (2 - p)) - y * std::pow(mu, 1 - p) / (1 - p) +
                          std::pow(mu, 2 - p) / (2 - p));
    return std::max(0.0, v);
}

inline double tweedie_zero_mass(double p, double mu, double tau) {
    if (!(p > 1 && p < 2)) throw domain_error("tweedie_zero_mass: needs 1 < p < 2");
    if (!(mu > 0) || !(tau > 0)) throw domain_error("tweedie_zero_mass: mu and tau must be positive");
    return std::exp(-std::pow(mu, 2 - p) / (tau * (2 - p)));
}

namespace detail {

inline constexpr long tweedie_series_cap = 100000;
inline constexpr double tweedie_series_rel = 1e-12;

// Compound Poisson-gamma density for 1 < p < 2 and y > 0:
// sum over j >= 1 of Poisson(j; lambda) * Gamma(y; j alpha, gamma).
inline double tweedie_cpg_density(double p, double y, double mu, double tau) {
    const double lambda = std::pow(mu, 2 - p) / (tau * (2 - p));
    const double shape = (2 - p) / (p - 1);
    const double scale = tau * (p - 1) * std::pow(mu, p - 1);
    const double log_lambda = std::log(lambda), log_y = std::log(y), log_scale = std::log(scale);
    const auto log_w = [&](double j) {
        const double k = j * shape;
        return -lambda + j * log_lambda - std::lgamma(j + 1) + (k - 1) * log_y - y / scale - std::lgamma(k) - k * log_scale;
    };
    const double j0 = std::max(1.0, std::round(std::pow(y, 2 - p) / (tau * (2 - p))));
    const double anchor = log_w(j0);
    double sum = 1.0;  // in units of exp(anchor)
    long count = 1;
    double prev = anchor;
    for (double j = j0 + 1;; j += 1) {
        const double lw = log_w(j);
        const double term = std::exp(lw - anchor);
        sum += term;
        if (++count > tweedie_series_cap) throw numerical_error("tweedie series: term cap reached");
        if (lw < prev && term < tweedie_series_rel * sum) break;
        prev = lw;
    }
    prev = anchor;
    for (double j = j0 - 1; j >= 1; j -= 1) {
        const double lw = log_w(j);
        const double term = std::exp(lw - anchor);
        sum += term;
        if (++count > tweedie_series_cap) throw numerical_error("tweedie series: term cap reached");
        if (lw < prev && term < tweedie_series_rel * sum) break;
        prev = lw;
    }
    return std::exp(anchor + std::log(sum));
}

// Standard positive stable density (Laplace transform exp(-s^alpha)) by
// Kanter's non-oscillatory integral. Takes and returns logs, since for small
// alpha the natural scale of x is far outside double range.
inline double log_positive_stable_density(double alpha, double log_x) {
    const double e = 1 / (1 - alpha);
    const auto A = [alpha, e](double phi) {
        return std::pow(std::sin(alpha * phi) / std::sin(phi), e) * std::sin((1 - alpha) * phi) / std::sin(alpha * phi);
    };
    const double c = std::exp(-alpha * e * log_x);
    const double a0 = std::pow(alpha, alpha * e) * (1 - alpha);  // A(0+)
    QuadratureOptions opt;
    opt.rel_tol = 1e-12;
    opt.breakpoints = {1e-3 * M_PI, 1e-2 * M_PI, 0.1 * M_PI, 0.5 * M_PI, 0.9 * M_PI};
    const double integral = integrate_value(
        [&](double phi) {
            const double a = A(phi);
            if (!std::isfinite(a)) return 0.0;
            return a * std::exp(-c * (a - a0));
        },
        0.0, M_PI, opt);
    if (!(integral > 0)) return -inf;
    return std::log(alpha * e / M_PI) - e * log_x + std::log(integral) - c * a0;
}

// p > 2: density = a(y, tau) exp{[y theta - b]/tau}. The series
// a = (1/(pi y)) sum_k V_k alternates in sign; when it loses more than three
// digits to cancellation, a(y, tau) is taken from the positive stable law it
// represents (Laplace transform exp(-c s^alpha), c = ((p-1)tau)^alpha/(tau(p-2))).
inline double tweedie_stable_density(double p, double y, double mu, double tau) {
    const double alpha = (2 - p) / (1 - p);
    const double log_y = std::log(y), log_tau = std::log(tau);
    const double theta = tweedie_theta(p, mu);
    const double tilt = (y * theta - tweedie_kappa(p, mu)) / tau;
    const auto log_abs_v = [&](double k) {
        return std::lgamma(1 + alpha * k) + k * (alpha - 1) * log_tau + alpha * k * std::log(p - 1) -
               std::lgamma(1 + k) - k * std::log(p - 2) - alpha * k * log_y;
    };
    const auto sign_sin = [&](double k) {
        const double s = std::sin(k * M_PI * alpha);
        const double sgn = (static_cast<long>(k) % 2 == 0) ? -1.0 : 1.0;  // (-1)^k sin(-k pi alpha)
        return sgn * s;
    };
    const double k0 = std::max(1.0, std::round(std::pow(y, 2 - p) / (tau * (p - 2))));
    const double anchor = log_abs_v(k0);
    double sum = sign_sin(k0);
    double mag = 1.0;
    long count = 1;
    bool capped = false;
    double prev = anchor;
    for (double k = k0 + 1;; k += 1) {
        const double lv = log_abs_v(k);
        const double w = std::exp(lv - anchor);
        sum += w * sign_sin(k);
        mag += w;
        if (++count > tweedie_series_cap) {
            capped = true;
            break;
        }
        if (lv < prev && w < tweedie_series_rel * mag) break;
        prev = lv;
    }
    prev = anchor;
    for (double k = k0 - 1; k >= 1 && !capped; k -= 1) {
        const double lv = log_abs_v(k);
        const double w = std::exp(lv - anchor);
        sum += w * sign_sin(k);
        mag += w;
        if (++count > tweedie_series_cap) capped = true;
        if (lv < prev && w < tweedie_series_rel * mag) break;
        prev = lv;
    }
    if (!capped && sum > 0 && mag < 1e3 * sum) {
        return std::exp(anchor + std::log(sum) - std::log(M_PI * y) + tilt);
    }
    const double log_c = alpha * std::log((p - 1) * tau) - std::log(tau * (p - 2));
    const double log_scale = log_c / alpha;
    return std::exp(log_positive_stable_density(alpha, log_y - log_scale) - log_scale + tilt);
}

}  // namespace detail

/// Density (probability at lattice points for p = 1 and at the atom y = 0
/// for 1 < p < 2). Closed forms at p in {0, 1, 2, 3}, series otherwise; the
/// limit forms also apply within tweedie_limit_width of p = 1 and p = 2.
inline double tweedie_density(double p, double y, double mu, double tau) {
    detail::check_power(p);
    if (p < 0) throw domain_error("tweedie: densities for p < 0 are not evaluated");
    if (!(tau > 0)) throw domain_error("tweedie: tau must be positive");
    if (!tweedie_mean_domain(p).contains(mu)) throw domain_error("tweedie: mu outside the mean domain");
    if (!tweedie_support(p).contains(y)) {
        std::ostringstream os;
        os << "tweedie: y=" << y << " outside the support for p=" << p;
        throw domain_error(os.str());
    }
    if (p == 0) {
        const double z = (y - mu) / std::sqrt(tau);
        return numeric::normal_pdf(z) / std::sqrt(tau);
    }
    if (detail::near(p, 1)) {
        // Y / tau is Poisson(mu / tau) on the lattice tau * N0
        const double k = y / tau;
        if (std::fabs(k - std::round(k)) > 1e-9 * std::max(1.0, k)) {
            throw domain_error("tweedie: y is not on the lattice tau*N0 for p=1");
        }
        const double n = std::round(k), m = mu / tau;
        return std::exp(n * std::log(m) - m - std::lgamma(n + 1));
    }
    if (detail::near(p, 2)) {
        const double s = 1 / tau;
        return std::exp(s * std::log(s / mu) + (s - 1) * std::log(y) - s * y / mu - std::lgamma(s));
    }
    if (p == 3) {
        const double r = y - mu;
        return std::exp(-r * r / (2 * tau * mu * mu * y)) / std::sqrt(two_pi * tau * y * y * y);
    }
    if (p < 2) {
        if (y == 0) return tweedie_zero_mass(p, mu, tau);
        return detail::tweedie_cpg_density(p, y, mu, tau);
    }
    return detail::tweedie_stable_density(p, y, mu, tau);
}

/// P(Y <= y): lattice sum for p = 1, otherwise quadrature of the density
/// (plus the atom for 1 < p < 2).
inline double tweedie_cdf(double p, double y, double mu, double tau) {
    detail::check_power(p);
    if (p < 0) throw domain_error("tweedie: distribution functions for p < 0 are not evaluated");
    const Interval sup = tweedie_support(p);
    if (y < sup.lo || (y == sup.lo && !sup.lo_closed)) return 0.0;
    if (detail::near(p, 1)) {
        double total = 0.0;
        for (double k = 0; k * tau <= y + 1e-12 * std::max(1.0, y); k += 1) total += tweedie_density(p, k * tau, mu, tau);
        return std::min(1.0, total);
    }
    if (p == 0) return numeric::normal_cdf((y - mu) / std::sqrt(tau));
    const double sd = std::sqrt(tau * std::pow(mu, p));
    QuadratureOptions opt;
    for (double k : {-3.0, -1.0, 0.0, 1.0, 3.0}) opt.breakpoints.push_back(mu + k * sd);
    double total = (p > 1 && p < 2 && !detail::near(p, 2)) ? tweedie_zero_mass(p, mu, tau) : 0.0;
    total += integrate_value([&](double x) { return x > 0 ? tweedie_density(p, x, mu, tau) : 0.0; }, 0.0, y, opt);
    return std::min(1.0, total);
}

/// The Tweedie model as an EDM with V(mu) = mu^p.
inline EdmFamily tweedie_family(double p) {
    detail::check_power(p);
    if (p == 0) {
        EdmFamily f = normal_family();
        f.name = "tweedie(0)";
        return f;
    }
    if (p == 1) {
        EdmFamily f = poisson_family();
        f.name = "tweedie(1)";
        return f;
    }
    if (p == 2) {
        EdmFamily f = gamma_family();
        f.name = "tweedie(2)";
        return f;
    }
    EdmFamily f;
    std::ostringstream name;
    name << "tweedie(" << p << ")";
    f.name = name.str();
    f.theta_domain = tweedie_theta_domain(p);
    f.mean_domain = tweedie_mean_domain(p);
    f.support = tweedie_support(p);
    f.theta_start = p < 0 ? 1.0 : -1.0;
    f.b = [p](double t) { return tweedie_cumulant_generator(p, t); };
    f.b1 = [p](double t) { return tweedie_mean(p, t); };
    f.b2 = [p](double t) { return std::pow(tweedie_mean(p, t), p); };
    f.b_derivative = [p](double t, int r) {
        // b^(r) = c_r mu^(e_r), e_r = (r-1)p - (r-2), c_{r+1} = c_r e_r
        const double mu = tweedie_mean(p, t);
        double c = 1.0;
        for (int k = 1; k < r; ++k) c *= (k - 1) * p - (k - 2);
        return c * std::pow(mu, (r - 1) * p - (r - 2));
    };
    f.q = [p](double m) { return tweedie_theta(p, m); };
    f.V = [p](double m) { return std::pow(m, p); };
    f.dV = [p](double m) { return p * std::pow(m, p - 1); };
    f.deviance = [p](double y, double m) { return tweedie_deviance(p, y, m); };
    if (p > 1) {
        // c(y; tau) = log f(y; mu = 1, tau) - [y theta(1) - kappa(1)] / tau
        f.log_normalizer = [p](double y, double tau) {
            return std::log(tweedie_density(p, y, 1.0, tau)) - (y * tweedie_theta(p, 1.0) - tweedie_kappa(p, 1.0)) / tau;
        };
    }
    return f;
}

}  // namespace dispersion
