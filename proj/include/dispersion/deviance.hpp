#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include "dispersion/error.hpp"
#include "dispersion/interval.hpp"
#include "dispersion/numeric.hpp"
#include "dispersion/quadrature.hpp"
#include "dispersion/report.hpp"

namespace dispersion {

/// A unit deviance d(y; mu) on support C with parameter domain Omega.
/// `d2_diag` is the analytic second mu-derivative on the diagonal and `d_dy`
/// the analytic partial in y; both are optional.
struct UnitDeviance {
    std::string name;
    Interval support;
    Interval domain;
    bool lattice = false;
    bool circular = false;  // angles; evaluation accepts any real value
    bool regular = true;
    std::function<double(double, double)> eval;
    std::function<double(double)> d2_diag;
    std::function<double(double, double)> d_dy;
};

struct VarianceFunction {
    Interval domain;
    std::function<double(double)> eval;

    double operator()(double mu) const { return eval(mu); }
};

namespace detail {

inline void require_finite(double x, const char* what) {
    if (!std::isfinite(x)) throw domain_error(std::string(what) + " is not finite");
}

inline void check_args(const UnitDeviance& d, double y, double mu) {
    if (d.circular) {
        require_finite(y, "y");
        require_finite(mu, "mu");
        return;
    }
    if (!d.support.contains(y)) {
        std::ostringstream os;
        os << d.name << ": y=" << y << " outside support " << d.support.str();
        throw domain_error(os.str());
    }
    if (!d.domain.contains(mu)) {
        std::ostringstream os;
        os << d.name << ": mu=" << mu << " outside parameter domain " << d.domain.str();
        throw domain_error(os.str());
    }
}

// Room around x for finite differences of order `reach` steps.
inline double diff_step(const UnitDeviance& d, const Interval& iv, double x, double reach) {
    const double h = numeric::fd_step(x);
    return d.circular ? h : numeric::fit_step(iv, x, h, reach);
}

}  // namespace detail

inline double eval_deviance(const UnitDeviance& d, double y, double mu) {
    detail::check_args(d, y, mu);
    if (y == mu) return 0.0;
    const double v = d.eval(y, mu);
    if (std::isnan(v)) throw numerical_error(d.name + ": deviance evaluated to NaN");
    return std::max(0.0, v);
}

/// d^2 d(y; mu)/dmu^2 at y = mu: analytic when registered, else 5-point stencil.
inline double diagonal_curvature(const UnitDeviance& d, double mu) {
    detail::check_args(d, mu, mu);
    if (d.d2_diag) return d.d2_diag(mu);
    const double h = detail::diff_step(d, d.domain, mu, 2);
    return numeric::second_derivative([&](double m) { return d.eval(mu, m); }, mu, h);
}

inline double unit_variance(const UnitDeviance& d, double mu) {
    const double c = diagonal_curvature(d, mu);
    if (!(c > 0) || !std::isfinite(c)) {
        std::ostringstream os;
        os << d.name << ": non-positive curvature " << c << " at mu=" << mu << " (deviance not regular)";
        throw domain_error(os.str());
    }
    return 2.0 / c;
}

inline VarianceFunction variance_of(const UnitDeviance& d) {
    return {d.domain, [d](double mu) { return unit_variance(d, mu); }};
}

struct SecondDerivatives {
    double dyy = 0.0;
    double dmumu = 0.0;
    double dymu = 0.0;
};

/// The three second derivatives of d at (mu, mu), all by finite differences.
inline SecondDerivatives second_derivative_identity(const UnitDeviance& d, double mu) {
    detail::check_args(d, mu, mu);
    const Interval both = d.domain;
    const double h2 = detail::diff_step(d, both, mu, 2);
    const double h1 = detail::diff_step(d, both, mu, 1);
    SecondDerivatives out;
    out.dyy = numeric::second_derivative([&](double y) { return d.eval(y, mu); }, mu, h2);
    out.dmumu = numeric::second_derivative([&](double m) { return d.eval(mu, m); }, mu, h2);
    const auto f = [&](double a, double b) { return d.eval(mu + a, mu + b); };
    out.dymu = (f(h1, h1) - f(h1, -h1) - f(-h1, h1) + f(-h1, -h1)) / (4 * h1 * h1);
    return out;
}

/// dd(y; mu)/dy: analytic when registered, else central difference.
inline double deviance_dy(const UnitDeviance& d, double y, double mu) {
    detail::check_args(d, y, mu);
    if (d.d_dy) return d.d_dy(y, mu);
    const double h = detail::diff_step(d, d.support, y, 2);
    return numeric::first_derivative([&](double t) { return d.eval(t, mu); }, y, h);
}

/// Monotone reparametrization z = f(y).
struct Transform {
    std::string name;
    std::function<double(double)> f;
    std::function<double(double)> inverse;
    std::function<double(double)> derivative;
};

inline Transform identity_transform() {
    return {"identity", [](double y) { return y; }, [](double z) { return z; }, [](double) { return 1.0; }};
}

inline Transform log_transform() {
    return {"log", [](double y) { return std::log(y); }, [](double z) { return std::exp(z); },
            [](double y) { return 1.0 / y; }};
}

inline Transform exp_transform() {
    return {"exp", [](double y) { return std::exp(y); }, [](double z) { return std::log(z); },
            [](double y) { return std::exp(y); }};
}

namespace detail {

inline Interval image(const Interval& iv, const Transform& t, bool increasing) {
    const double a = t.f(iv.lo), b = t.f(iv.hi);
    if (std::isnan(a) || std::isnan(b)) throw domain_error("transform: endpoint image is NaN");
    if (increasing) return {a, b, iv.lo_closed && std::isfinite(a), iv.hi_closed && std::isfinite(b)};
    return {b, a, iv.hi_closed && std::isfinite(b), iv.lo_closed && std::isfinite(a)};
}

}  // namespace detail

/// d_f(z; xi) = d(f^-1(z); f^-1(xi)). Rejects f whose derivative changes sign
/// or vanishes on a 64-point probe grid of the parameter domain.
inline UnitDeviance transform_deviance(const UnitDeviance& d, const Transform& t) {
    if (d.circular) throw domain_error("transform_deviance: circular deviances are not supported");
    int sign = 0;
    for (double y : probe_grid(d.domain, 64)) {
        const double fp = t.derivative(y);
        const int s = fp > 0 ? 1 : (fp < 0 ? -1 : 0);
        if (s == 0 || !std::isfinite(fp)) throw domain_error("transform_deviance: f' vanishes or is not finite at y=" + std::to_string(y));
        if (sign != 0 && s != sign) throw domain_error("transform_deviance: f is not monotone (f' changes sign)");
        sign = s;
    }
    UnitDeviance out;
    out.name = d.name + "|" + t.name;
    out.support = detail::image(d.support, t, sign > 0);
    out.domain = detail::image(d.domain, t, sign > 0);
    out.lattice = d.lattice && t.name == "identity";
    out.regular = d.regular;
    out.eval = [d, t](double z, double xi) { return d.eval(t.inverse(z), t.inverse(xi)); };
    if (d.d2_diag) {
        out.d2_diag = [d, t](double xi) {
            const double m = t.inverse(xi);
            const double fp = t.derivative(m);
            return d.d2_diag(m) / (fp * fp);
        };
    }
    if (d.d_dy) {
        out.d_dy = [d, t](double z, double xi) {
            const double y = t.inverse(z);
            return d.d_dy(y, t.inverse(xi)) / t.derivative(y);
        };
    }
    return out;
}

/// f(y) = integral from y_star to y of V^(-1/2).
inline double variance_stabilizing_transform(const VarianceFunction& V, double y_star, double y) {
    if (!V.domain.contains(y_star) || !V.domain.contains(y)) {
        throw domain_error("variance_stabilizing_transform: endpoint outside the variance domain");
    }
    if (y == y_star) return 0.0;
    const auto integrand = [&V](double v) {
        const double var = V(v);
        if (!(var > 0) || !std::isfinite(var)) throw numerical_error("variance_stabilizing_transform: V not positive on the path");
        return 1.0 / std::sqrt(var);
    };
    const double a = std::min(y, y_star), b = std::max(y, y_star);
    const double val = integrate_value(integrand, a, b);
    return y >= y_star ? val : -val;
}

/// The variance-stabilizing map as a Transform; the inverse is a root solve.
inline Transform vst_transform(const VarianceFunction& V, double y_star) {
    Transform t;
    t.name = "vst";
    t.f = [V, y_star](double y) {
        if (y == V.domain.lo || y == V.domain.hi) {
            // endpoint images: integrate right up to the boundary
            const double a = std::min(y, y_star), b = std::max(y, y_star);
            double val;
            try {
                val = integrate_value([&V](double v) { return 1.0 / std::sqrt(V(v)); }, a, b);
            } catch (const numerical_error&) {
                val = std::numeric_limits<double>::infinity();  // unbounded image
            }
            return y >= y_star ? val : -val;
        }
        return variance_stabilizing_transform(V, y_star, y);
    };
    t.derivative = [V](double y) { return 1.0 / std::sqrt(V(y)); };
    t.inverse = [V, y_star, f = t.f, df = t.derivative](double z) {
        return numeric::solve_increasing(f, df, z, V.domain.interior(), y_star, 1e-13 * std::max(1.0, std::fabs(z)));
    };
    return t;
}

// Built-in unit deviances

inline UnitDeviance normal_deviance() {
    UnitDeviance d;
    d.name = "normal";
    d.support = d.domain = Interval::real_line();
    d.eval = [](double y, double mu) { return (y - mu) * (y - mu); };
    d.d2_diag = [](double) { return 2.0; };
    d.d_dy = [](double y, double mu) { return 2 * (y - mu); };
    return d;
}

inline UnitDeviance gamma_deviance() {
    UnitDeviance d;
    d.name = "gamma";
    d.support = d.domain = Interval::positive();
    d.eval = [](double y, double mu) { return 2 * numeric::x_minus_log1p((y - mu) / mu); };
    d.d2_diag = [](double mu) { return 2 / (mu * mu); };
    d.d_dy = [](double y, double mu) { return 2 * (1 / mu - 1 / y); };
    return d;
}

inline UnitDeviance poisson_deviance() {
    UnitDeviance d;
    d.name = "poisson";
    d.support = Interval::nonnegative();
    d.domain = Interval::positive();
    d.lattice = true;
    d.eval = [](double y, double mu) { return 2 * mu * numeric::one_plus_x_log1p_minus_x((y - mu) / mu); };
    d.d2_diag = [](double mu) { return 2 / mu; };
    d.d_dy = [](double y, double mu) { return 2 * std::log(y / mu); };
    return d;
}

inline UnitDeviance von_mises_deviance() {
    UnitDeviance d;
    d.name = "vonmises";
    d.support = d.domain = Interval::closed_open(0.0, two_pi);
    d.circular = true;
    d.eval = [](double y, double mu) {
        const double s = std::sin(0.5 * (y - mu));
        return 4 * s * s;
    };
    d.d2_diag = [](double) { return 2.0; };
    d.d_dy = [](double y, double mu) { return 2 * std::sin(y - mu); };
    return d;
}

inline UnitDeviance simplex_deviance() {
    UnitDeviance d;
    d.name = "simplex";
    d.support = d.domain = Interval::open(0.0, 1.0);
    d.eval = [](double y, double mu) {
        const double r = y - mu;
        const double m = mu * (1 - mu);
        return r * r / (y * (1 - y) * m * m);
    };
    d.d2_diag = [](double mu) {
        const double m = mu * (1 - mu);
        return 2 / (m * m * m);
    };
    d.d_dy = [](double y, double mu) {
        const double r = y - mu;
        const double g = y * (1 - y);
        const double m = mu * mu * (1 - mu) * (1 - mu);
        return (2 * r * g - r * r * (1 - 2 * y)) / (g * g * m);
    };
    return d;
}

inline UnitDeviance inverse_gaussian_deviance() {
    UnitDeviance d;
    d.name = "inverse_gaussian";
    d.support = d.domain = Interval::positive();
    d.eval = [](double y, double mu) {
        const double r = y - mu;
        return r * r / (mu * mu * y);
    };
    d.d2_diag = [](double mu) { return 2 / (mu * mu * mu); };
    d.d_dy = [](double y, double mu) { return 1 / (mu * mu) - 1 / (y * y); };
    return d;
}

inline std::vector<std::string> deviance_names() {
    return {"normal", "gamma", "poisson", "vonmises", "simplex", "inverse_gaussian"};
}

inline UnitDeviance deviance_by_name(const std::string& name) {
    if (name == "normal") return normal_deviance();
    if (name == "gamma") return gamma_deviance();
    if (name == "poisson") return poisson_deviance();
    if (name == "vonmises" || name == "von_mises") return von_mises_deviance();
    if (name == "simplex") return simplex_deviance();
    if (name == "inverse_gaussian" || name == "ig") return inverse_gaussian_deviance();
    throw domain_error("unknown deviance '" + name + "'");
}

inline double relative_gap(double a, double b) {
    const double s = std::max(std::fabs(a), std::fabs(b));
    return s == 0 ? 0.0 : std::fabs(a - b) / s;
}

/// Unit-deviance axioms and, for regular deviances, curvature and the
/// dyy = dmumu = -dymu identity on a 20-point grid.
inline Report check_deviance(const UnitDeviance& d, std::size_t n_random = 100, unsigned long long seed = 0x5EED) {
    Report rep;
    std::mt19937_64 rng(seed);
    bool zero_ok = true, pos_ok = true;
    std::string zero_w, pos_w;
    for (std::size_t i = 0; i < n_random; ++i) {
        const double mu = draw_inside(d.domain, rng);
        if (d.eval(mu, mu) != 0.0 || eval_deviance(d, mu, mu) != 0.0) {
            zero_ok = false;
            zero_w = "mu=" + std::to_string(mu);
        }
        double y = draw_inside(d.support, rng);
        if (d.circular && std::fabs(std::remainder(y - mu, two_pi)) < 1e-9) continue;
        if (y == mu) continue;
        const double v = eval_deviance(d, y, mu);
        if (!(v > 0)) {
            pos_ok = false;
            pos_w = "y=" + std::to_string(y) + " mu=" + std::to_string(mu);
        }
    }
    rep.add("zero on diagonal", zero_ok, zero_w);
    rep.add("positive off diagonal", pos_ok, pos_w);
    if (!d.regular) return rep;

    bool curv_ok = true, ident_ok = true, var_ok = true;
    double worst = 0.0;
    for (double mu : probe_grid(d.domain, 20)) {
        const auto s = second_derivative_identity(d, mu);
        const double c = diagonal_curvature(d, mu);
        if (!(c > 0) || !(s.dmumu > 0)) curv_ok = false;
        worst = std::max({worst, relative_gap(s.dyy, s.dmumu), relative_gap(s.dmumu, -s.dymu)});
        if (relative_gap(s.dyy, s.dmumu) > 1e-5 || relative_gap(s.dmumu, -s.dymu) > 1e-5) ident_ok = false;
        if (relative_gap(2 / s.dyy, unit_variance(d, mu)) > 1e-5) var_ok = false;
    }
    rep.add("positive curvature on diagonal", curv_ok);
    std::ostringstream os;
    os << "max relative gap " << worst;
    rep.add("dyy = dmumu = -dymu", ident_ok, os.str());
    rep.add("variance from dyy matches dmumu", var_ok);
    return rep;
}

}  // namespace dispersion
