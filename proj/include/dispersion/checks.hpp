#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dispersion/cf_construct.hpp"
#include "dispersion/deviance.hpp"
#include "dispersion/edm.hpp"
#include "dispersion/pdm.hpp"
#include "dispersion/quadrature.hpp"
#include "dispersion/report.hpp"
#include "dispersion/tweedie.hpp"

namespace dispersion {

/// Total probability of the exact density at (theta, tau): a lattice sum
/// or quadrature over the support with breakpoints around the mean.
inline double edm_total_mass(const EdmFamily& f, double theta, double tau) {
    const double mu = mean_value(f, theta);
    const double sd = std::sqrt(tau * variance_function(f, mu));
    const auto dens = [&](double y) { return std::exp(log_density_exact(f, y, theta, tau)); };
    if (f.lattice) {
        const double lo = std::ceil(f.support.lo_closed ? f.support.lo : std::nextafter(f.support.lo, inf));
        double total = 0.0;
        for (double y = lo; f.support.contains(y); y += 1.0) {
            const double v = dens(y);
            total += v;
            if (y > mu && v < 1e-17 * total) break;
            if (y - lo > 1e7) throw numerical_error("lattice sum did not converge");
        }
        return total;
    }
    QuadratureOptions opt;
    for (double k : {-30.0, -10.0, -3.0, -1.0, 0.0, 1.0, 3.0, 10.0, 30.0}) opt.breakpoints.push_back(mu + k * sd);
    const Interval& s = f.support;
    // the density may be singular at a finite end; [lo, lo + sd/100] gets its own panel
    if (std::isfinite(s.lo)) opt.breakpoints.push_back(s.lo + 1e-2 * std::min(sd, mu - s.lo));
    const auto g = [&](double y) { return s.contains(y) ? dens(y) : 0.0; };
    return integrate_value(g, s.lo, s.hi, opt);
}

namespace detail {

template <class Rng>
double moderate_mean(const EdmFamily& f, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Interval& iv = f.mean_domain;
    if (iv.bounded()) return iv.lo + iv.width() * (0.1 + 0.8 * u(rng));
    if (std::isfinite(iv.lo)) return iv.lo + std::pow(10.0, -1.0 + 2.0 * u(rng));
    if (std::isfinite(iv.hi)) return iv.hi - std::pow(10.0, -1.0 + 2.0 * u(rng));
    return -3.0 + 6.0 * u(rng);
}

inline std::string gap_text(double g) {
    std::ostringstream os;
    os << "max gap " << g;
    return os.str();
}

}  // namespace detail

/// Invariant suite for one EDM family.
inline Report check_family(const EdmFamily& f, unsigned long long seed = 0x5EED) {
    Report rep;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    bool mono = true;
    for (int i = 0; i < 100; ++i) {
        double t1 = inverse_mean(f, detail::moderate_mean(f, rng)), t2 = inverse_mean(f, detail::moderate_mean(f, rng));
        if (t1 > t2) std::swap(t1, t2);
        if (t1 < t2 && !(mean_value(f, t1) < mean_value(f, t2))) mono = false;
    }
    rep.add("mean mapping increasing", mono);

    double kgap = 0.0, vgap = 0.0;
    for (int i = 0; i < 20; ++i) {
        const double mu = detail::moderate_mean(f, rng);
        const double theta = inverse_mean(f, mu);
        const double tau = f.unit_dispersion ? 1.0 : 0.2 + 1.3 * u(rng);
        kgap = std::max(kgap, relative_gap(cumulant(f, 1, theta, tau), mean_value(f, theta)));
        kgap = std::max(kgap, relative_gap(cumulant(f, 2, theta, tau), tau * variance_function(f, mean_value(f, theta))));
        const double b2 = numeric::richardson_derivative(f.b, theta, 2, detail::theta_step(f, theta, 0.05));
        vgap = std::max(vgap, relative_gap(b2, variance_function(f, mu)));
    }
    rep.add("kappa1 = mean, kappa2 = tau V(mean)", kgap <= 1e-8, detail::gap_text(kgap));
    rep.add("V(mu) = b''(q(mu))", vgap <= 1e-6, detail::gap_text(vgap));

    rep.append(check_deviance(edm_unit_deviance(f), 100, seed), "unit deviance: ");

    if (f.deviance) {
        double dgap = 0.0;
        for (int i = 0; i < 50; ++i) {
            const double mu = detail::moderate_mean(f, rng);
            double y = detail::moderate_mean(f, rng);
            if (f.lattice && !f.mean_domain.bounded()) y = std::round(y);
            if (!f.support.contains(y) || y == mu) continue;
            const double a = edm_deviance(f, y, mu), b = edm_deviance_by_quadrature(f, y, mu);
            dgap = std::max(dgap, std::fabs(a - b) / std::max(1.0, std::fabs(a)));
        }
        rep.add("closed-form deviance = quadrature of 2(y-t)/V(t)", dgap <= 1e-8, detail::gap_text(dgap));
    }

    if (f.log_normalizer) {
        double worst = 0.0;
        for (int i = 0; i < 5; ++i) {
            const double theta = inverse_mean(f, detail::moderate_mean(f, rng));
            const double tau = f.unit_dispersion ? 1.0 : 0.2 + 0.8 * u(rng);
            worst = std::max(worst, std::fabs(edm_total_mass(f, theta, tau) - 1));
        }
        rep.add("density integrates to 1", worst <= 1e-6, detail::gap_text(worst));
    }

    if (!f.unit_dispersion) {
        double worst = 0.0;
        for (int i = 0; i < 20; ++i) {
            const double theta = inverse_mean(f, detail::moderate_mean(f, rng));
            const double tau = 0.2 + 0.8 * u(rng);
            const long n = 2 + static_cast<long>(9 * u(rng));
            const auto [th_n, tau_n] = sample_mean_family(f, theta, tau, n);
            // keep theta + tau t inside the domain
            const double room = std::min(theta - f.theta_domain.lo, f.theta_domain.hi - theta);
            const double t = (u(rng) - 0.5) * std::min(1.0, 0.5 * room / tau);
            const double lhs = cgf(f, t, th_n, tau_n);
            const double rhs = static_cast<double>(n) * cgf(f, t / static_cast<double>(n), theta, tau);
            worst = std::max(worst, std::fabs(lhs - rhs) / std::max(1.0, std::fabs(rhs)));
        }
        rep.add("sample mean cgf = n K(t/n)", worst <= 1e-12, detail::gap_text(worst));
    }
    return rep;
}

inline Report check_tweedie(unsigned long long seed = 0x5EED) {
    Report rep;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double p : {0.0, 1.5, 2.0, 3.0}) {
        const EdmFamily f = tweedie_family(p);
        double worst = 0.0;
        for (int i = 0; i < 50; ++i) {
            const double mu = std::pow(10.0, -1 + 2 * u(rng));
            const double y = p == 0.0 ? -3 + 6 * u(rng) : std::pow(10.0, -1 + 2 * u(rng));
            if (!f.mean_domain.contains(y)) continue;
            const double a = tweedie_deviance(p, y, mu), b = edm_deviance_by_quadrature(f, y, mu);
            worst = std::max(worst, std::fabs(a - b) / std::max(1.0, std::fabs(a)));
        }
        std::ostringstream name;
        name << "deviance = quadrature (p=" << p << ")";
        rep.add(name.str(), worst <= 1e-8, detail::gap_text(worst));
    }
    for (double p : {1.5, 2.5}) {
        const double mu = 1.0, tau = 1.0;
        QuadratureOptions opt;
        opt.breakpoints = {0.01, 0.1, 0.5, 1, 2, 5, 10, 30};
        const double mass = (p < 2 ? tweedie_zero_mass(p, mu, tau) : 0.0) +
                            integrate_value([&](double y) { return y > 0 ? tweedie_density(p, y, mu, tau) : 0.0; },
                                            0.0, inf, opt);
        std::ostringstream name;
        name << "atom + density integral = 1 (p=" << p << ")";
        rep.add(name.str(), std::fabs(mass - 1) <= 1e-6, detail::gap_text(std::fabs(mass - 1)));
    }
    {
        const double a = tweedie_density(2.0, 1.3, 1.0, 0.5);
        const double gap = std::max(std::fabs(tweedie_density(2.0 + 1e-7, 1.3, 1.0, 0.5) - a),
                                    std::fabs(tweedie_density(2.0 - 1e-7, 1.3, 1.0, 0.5) - a));
        rep.add("density continuous at p=2", gap < 1e-4, detail::gap_text(gap));
    }
    return rep;
}

inline Report check_pdm_full(const PdmSpec& p, unsigned long long seed = 0x5EED) {
    Report rep = check_pdm(p);
    rep.append(check_deviance(p.deviance, 100, seed), "deviance: ");
    const auto probes = probe_grid(p.deviance.domain, 5);
    const std::vector<double> mus(probes.begin() + 1, probes.end() - 1);
    const auto piv = pivotal_check(p, mus, 0.5, 10000, seed);
    double worst = 1.0;
    for (const auto& k : piv.pairs) worst = std::min(worst, k.p_value);
    std::ostringstream os;
    os << "min KS p-value " << worst;
    rep.add("d(Y, mu) pivotal (m=10000)", piv.passed(), os.str());
    return rep;
}

inline Report check_cf_builtins(unsigned long long seed = 0x5EED) {
    Report rep;
    for (const auto& name : {"gauss", "laplace-cf", "triangular-cf", "cauchy"}) {
        const CfSpec cf = cf_by_name(name);
        rep.append(check_cf(cf), std::string(name) + ": ");
        UnitDeviance d = cf_unit_deviance(cf);
        d.regular = false;  // the triple identity is checked separately below
        rep.append(check_deviance(d, 100, seed), std::string(name) + ": ");
        if (cf.regular()) {
            bool ok = true;
            for (double mu : probe_grid(d.domain, 20)) {
                if (!(diagonal_curvature(d, mu) > 0)) ok = false;
            }
            rep.add(std::string(name) + ": curvature positive", ok);
        }
        for (double tau : {0.25, 1.0}) {
            const double plateau = kernel_plateau(cf, tau);
            bool ok = true;
            for (double t : probe_grid(Interval::open(-50, 50), 101)) {
                const double k = kernel(cf, tau, t);
                if (k < plateau - 1e-3 || k > 1) ok = false;
            }
            rep.add(std::string(name) + ": kernel within [plateau, 1] (tau=" + std::to_string(tau) + ")", ok);
        }
    }
    return rep;
}

inline std::vector<std::string> check_scopes() {
    std::vector<std::string> s = family_names();
    for (const auto& n : deviance_names()) s.push_back(n);
    for (const auto& n : pdm_names()) s.push_back(n);
    s.push_back("tweedie");
    s.push_back("cf");
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
}

/// Runs every suite registered under `scope` (a family, deviance or PDM
/// name, "tweedie", "cf", or "all").
inline Report run_checks(const std::string& scope, unsigned long long seed = 0x5EED) {
    Report rep;
    bool known = false;
    const bool all = scope == "all";
    for (const auto& n : family_names()) {
        if (all || n == scope) {
            rep.append(check_family(family_by_name(n), seed), "family " + n + ": ");
            known = true;
        }
    }
    for (const auto& n : deviance_names()) {
        if (all || n == scope) {
            rep.append(check_deviance(deviance_by_name(n), 100, seed), "deviance " + n + ": ");
            known = true;
        }
    }
    for (const auto& n : pdm_names()) {
        if (all || n == scope) {
            rep.append(check_pdm_full(pdm_by_name(n), seed), "pdm " + n + ": ");
            known = true;
        }
    }
    if (all || scope == "tweedie") {
        rep.append(check_tweedie(seed), "tweedie: ");
        known = true;
    }
    if (all || scope == "cf") {
        rep.append(check_cf_builtins(seed), "cf ");
        known = true;
    }
    if (!known) throw domain_error("unknown check scope '" + scope + "'");
    return rep;
}

}  // namespace dispersion
