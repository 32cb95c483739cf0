#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/special_functions/fpclassify.hpp>  // pchip.hpp needs isnan declared first
#include <boost/math/interpolators/pchip.hpp>

#include "dispersion/deviance.hpp"
#include "dispersion/numeric.hpp"
#include "dispersion/renormalized.hpp"
#include "dispersion/report.hpp"

namespace dispersion {

/// Memo table tau -> a0(tau). Concurrent readers; a miss may be computed by
/// several threads at once, the first insert wins.
class NormalizerCache {
public:
    template <class F>
    double get_or_compute(double tau, F&& compute) {
        {
            std::shared_lock lock(mutex_);
            auto it = values_.find(tau);
            if (it != values_.end()) return it->second;
        }
        const double v = compute();
        std::unique_lock lock(mutex_);
        return values_.emplace(tau, v).first->second;
    }
    std::size_t size() const {
        std::shared_lock lock(mutex_);
        return values_.size();
    }

private:
    mutable std::shared_mutex mutex_;
    std::map<double, double> values_;
};

/// Proper dispersion model a0(tau) b(y) exp{-d(y; mu)/(2 tau)}.
struct PdmSpec {
    std::string name;
    UnitDeviance deviance;
    std::function<double(double)> carrier;
    bool regular_pdm = false;  // carrier declared equal to V^(-1/2)
    double reference_mu = 0.0;  // probe mean used to fill the normalizer cache
    std::shared_ptr<NormalizerCache> cache = std::make_shared<NormalizerCache>();
};

namespace detail {

inline double pdm_scale(const UnitDeviance& d, double mu, double tau) {
    if (d.regular) {
        try {
            return std::sqrt(tau * unit_variance(d, mu));
        } catch (const domain_error&) {
        }
    }
    return std::sqrt(tau);
}

}  // namespace detail

/// a0(tau) = 1 / integral over C of b(y) exp{-d(y; mu)/(2 tau)}, at mu = probe_mu.
inline double pdm_normalizer(const UnitDeviance& d, const std::function<double(double)>& carrier, double tau,
                             double probe_mu) {
    if (!(tau > 0)) throw domain_error("pdm_normalizer: tau must be positive");
    detail::check_args(d, probe_mu, probe_mu);
    const double scale = detail::pdm_scale(d, probe_mu, tau);
    double total = 0.0;
    try {
        total = integrate_over_support(
            d,
            [&](double y) {
                if (!d.circular && !d.support.interior().contains(y) && !d.lattice) return 0.0;
                const double e = std::exp(-eval_deviance(d, y, probe_mu) / (2 * tau));
                return e == 0.0 ? 0.0 : carrier(y) * e;
            },
            probe_mu, scale);
    } catch (const numerical_error& e) {
        throw numerical_error(d.name + ": normalizing integral diverges (" + e.what() + ")");
    }
    if (!(total > 0) || !std::isfinite(total)) throw numerical_error(d.name + ": normalizing integral diverges");
    return 1.0 / total;
}

inline double pdm_normalizer(const PdmSpec& p, double tau) {
    return p.cache->get_or_compute(tau, [&] { return pdm_normalizer(p.deviance, p.carrier, tau, p.reference_mu); });
}

inline double pdm_density(const PdmSpec& p, double y, double mu, double tau) {
    detail::check_args(p.deviance, y, mu);
    if (!(tau > 0)) throw domain_error("pdm_density: tau must be positive");
    const double e = std::exp(-eval_deviance(p.deviance, y, mu) / (2 * tau));
    return pdm_normalizer(p, tau) * p.carrier(y) * e;
}

// Built-in proper dispersion models

inline PdmSpec von_mises_pdm() {
    return {"vonmises", von_mises_deviance(), [](double) { return 1.0; }, true, 0.0};
}

inline PdmSpec simplex_pdm() {
    return {"simplex", simplex_deviance(), [](double y) { return std::pow(y * (1 - y), -1.5); }, true, 0.5};
}

inline PdmSpec normal_pdm() {
    return {"normal", normal_deviance(), [](double) { return 1.0; }, true, 0.0};
}

inline PdmSpec gamma_pdm() {
    return {"gamma", gamma_deviance(), [](double y) { return 1 / y; }, true, 1.0};
}

inline PdmSpec inverse_gaussian_pdm() {
    return {"inverse_gaussian", inverse_gaussian_deviance(), [](double y) { return std::pow(y, -1.5); }, true, 1.0};
}

inline std::vector<std::string> pdm_names() { return {"vonmises", "simplex", "normal", "gamma", "inverse_gaussian"}; }

inline PdmSpec pdm_by_name(const std::string& name) {
    if (name == "vonmises" || name == "von_mises") return von_mises_pdm();
    if (name == "simplex") return simplex_pdm();
    if (name == "normal") return normal_pdm();
    if (name == "gamma") return gamma_pdm();
    if (name == "inverse_gaussian" || name == "ig") return inverse_gaussian_pdm();
    throw domain_error("unknown proper dispersion model '" + name + "'");
}

// Yokes

struct Yoke {
    std::string name;
    std::function<double(double, double)> t;  // t(y; theta)
    Interval domain;
    bool circular = false;
    bool normed = false;
};

struct Maximum {
    double theta = 0.0;
    double value = 0.0;
    bool at_window_edge = false;
    bool unique = true;
    double other_theta = 0.0;  // a second maximizer when not unique
};

namespace detail {

inline double wrap_angle(double x) {
    double r = std::fmod(x, two_pi);
    if (r < 0) r += two_pi;
    if (two_pi - r < 1e-9) r = 0.0;
    return r;
}

inline double angular_gap(double a, double b) { return std::fabs(std::remainder(a - b, two_pi)); }

// Search window for theta given y.
inline std::pair<double, double> yoke_window(const Yoke& k, double y) {
    if (k.circular) return {y - 0.5 * two_pi, y + 0.5 * two_pi};
    const Interval& iv = k.domain;
    const double reach = 10.0 * (1.0 + std::fabs(y));
    double lo = std::isfinite(iv.lo) ? iv.lo : y - reach;
    double hi = std::isfinite(iv.hi) ? iv.hi : y + reach;
    const double pad = 1e-9 * std::max(1.0, hi - lo);
    if (std::isfinite(iv.lo)) lo += pad;
    if (std::isfinite(iv.hi)) hi -= pad;
    return {lo, hi};
}

}  // namespace detail

/// Maximizes theta -> t(y; theta): 64-point coarse scan, golden section to
/// 1e-10 from every local maximum of the scan, uniqueness when all refined
/// global candidates agree within 1e-6.
inline Maximum maximize_yoke(const Yoke& k, double y) {
    const auto [lo, hi] = detail::yoke_window(k, y);
    constexpr int n = 64;
    // circular windows are scanned as a closed loop of n points
    const double step = k.circular ? (hi - lo) / n : (hi - lo) / (n - 1);
    std::vector<double> th(n), val(n);
    for (int i = 0; i < n; ++i) {
        th[i] = lo + step * i;
        val[i] = k.t(y, th[i]);
    }
    std::vector<std::pair<double, double>> found;  // (theta, value)
    for (int i = 0; i < n; ++i) {
        const double left = (i > 0) ? val[i - 1] : (k.circular ? val[n - 1] : -inf);
        const double right = (i < n - 1) ? val[i + 1] : (k.circular ? val[0] : -inf);
        if (!(val[i] >= left && val[i] >= right)) continue;
        const double a = k.circular ? th[i] - step : std::max(lo, th[i] - step);
        const double b = k.circular ? th[i] + step : std::min(hi, th[i] + step);
        const auto f = [&](double t) { return k.t(y, t); };
        double x = numeric::golden_section_max(f, a, b, 1e-10);
        const double polished = numeric::refine_maximum(f, x, 1e-6 * std::max(1.0, std::fabs(x)));
        if (f(polished) >= f(x) - 4 * numeric::eps * std::fabs(f(x))) x = polished;
        found.emplace_back(x, f(x));
    }
    if (found.empty()) {
        const auto it = std::max_element(val.begin(), val.end());
        found.emplace_back(th[static_cast<std::size_t>(it - val.begin())], *it);
    }
    auto best = *std::max_element(found.begin(), found.end(), [](auto& a, auto& b) { return a.second < b.second; });
    Maximum m;
    m.theta = k.circular ? detail::wrap_angle(best.first) : best.first;
    m.value = best.second;
    const double vtol = 1e-9 * (1.0 + std::fabs(best.second));
    for (const auto& [x, v] : found) {
        if (best.second - v > vtol) continue;
        const double gap = k.circular ? detail::angular_gap(x, best.first) : std::fabs(x - best.first);
        if (gap > 1e-6) {
            m.unique = false;
            m.other_theta = k.circular ? detail::wrap_angle(x) : x;
        }
    }
    if (!k.circular) {
        const double edge = 1e-6 * (hi - lo);
        m.at_window_edge = (best.first - lo < edge && !std::isfinite(k.domain.lo)) ||
                           (hi - best.first < edge && !std::isfinite(k.domain.hi));
    }
    return m;
}

struct YokeReport {
    Report report;
    std::vector<double> grid;
    std::vector<double> theta_hat;
    std::vector<double> supremum;
    bool passed() const { return report.passed(); }
};

/// Conditions for turning t into a unit deviance: finite supremum, unique
/// maximizer, and y -> theta_hat(y) strictly monotone on the grid.
inline YokeReport check_yokable(const Yoke& k, std::vector<double> grid) {
    std::sort(grid.begin(), grid.end());
    YokeReport rep;
    rep.grid = grid;
    bool finite_ok = true, unique_ok = true;
    std::string finite_w, unique_w;
    for (double y : grid) {
        if (!k.circular && !k.domain.contains(y)) throw domain_error("check_yokable: grid point outside the domain");
        const Maximum m = maximize_yoke(k, y);
        rep.theta_hat.push_back(m.theta);
        rep.supremum.push_back(m.value);
        if (!std::isfinite(m.value) || m.at_window_edge) {
            finite_ok = false;
            finite_w = "y=" + std::to_string(y);
        }
        if (!m.unique) {
            unique_ok = false;
            std::ostringstream os;
            os << "y=" << y << " maximizers " << m.theta << " and " << m.other_theta;
            unique_w = os.str();
        }
    }
    bool mono_ok = true;
    std::string mono_w;
    int sign = 0;
    for (std::size_t i = 1; i < rep.theta_hat.size(); ++i) {
        double step = rep.theta_hat[i] - rep.theta_hat[i - 1];
        if (k.circular) step = std::remainder(step, two_pi);
        const int s = step > 0 ? 1 : (step < 0 ? -1 : 0);
        if (s == 0 || (sign != 0 && s != sign)) {
            mono_ok = false;
            mono_w = "between y=" + std::to_string(grid[i - 1]) + " and y=" + std::to_string(grid[i]);
        }
        if (sign == 0) sign = s;
    }
    rep.report.add("(i) finite supremum", finite_ok, finite_w);
    rep.report.add("(ii) unique maximizer", unique_ok, unique_w);
    rep.report.add("(iii) strictly monotone maximizer map", mono_ok, mono_w);
    return rep;
}

namespace detail {

class YokeMemo {
public:
    Maximum get(const Yoke& k, double y) {
        {
            std::shared_lock lock(mutex_);
            auto it = memo_.find(y);
            if (it != memo_.end()) return it->second;
        }
        const Maximum m = maximize_yoke(k, y);
        std::unique_lock lock(mutex_);
        return memo_.emplace(y, m).first->second;
    }

private:
    std::shared_mutex mutex_;
    std::map<double, Maximum> memo_;
};

}  // namespace detail

/// d(y; mu) = 2[t_hat(y) - t(y; theta_hat(mu))], after check_yokable passes
/// on a 16-point probe grid of the domain.
inline UnitDeviance yoke_to_deviance(const Yoke& k) {
    const auto rep = check_yokable(k, probe_grid(k.domain, 16));
    if (!rep.passed()) {
        std::string why;
        for (const auto& it : rep.report.items) {
            if (!it.passed) why += " " + it.name + (it.detail.empty() ? "" : " (" + it.detail + ")");
        }
        throw domain_error("yoke '" + k.name + "' is not yokable:" + why);
    }
    auto memo = std::make_shared<detail::YokeMemo>();
    UnitDeviance d;
    d.name = "yoke:" + k.name;
    d.support = d.domain = k.domain;
    d.circular = k.circular;
    d.regular = true;
    d.eval = [k, memo](double y, double mu) {
        const Maximum my = memo->get(k, y);
        const Maximum mm = memo->get(k, mu);
        return 2 * (my.value - k.t(y, mm.theta));
    };
    return d;
}

enum class GroupAction { translation, rotation };

/// Transformation dispersion model from a group action: the yoke is
/// t(g^-1 y), i.e. t(y - theta) (angles mod 2 pi for rotations), with a
/// carrier b invariant under the action.
inline PdmSpec transformation_pdm(GroupAction action, const std::function<double(double)>& t,
                                  const std::function<double(double)>& b, std::string name = "transformation") {
    const bool circ = action == GroupAction::rotation;
    const auto act = [circ](double g, double y) { return circ ? detail::wrap_angle(g + y) : g + y; };
    const std::vector<double> probes = circ ? probe_grid(Interval::closed_open(0, two_pi), 12)
                                            : probe_grid(Interval::closed(-5, 5), 12);
    for (double g : probes) {
        for (double y : probes) {
            if (std::fabs(b(act(g, y)) - b(y)) >= 1e-10) {
                std::ostringstream os;
                os << "transformation_pdm: carrier not invariant under the group action (g=" << g << ", y=" << y << ")";
                throw domain_error(os.str());
            }
        }
    }
    Yoke k;
    k.name = name;
    k.circular = circ;
    k.domain = circ ? Interval::closed_open(0, two_pi) : Interval::real_line();
    k.t = [t, circ](double y, double theta) { return circ ? t(detail::wrap_angle(y - theta)) : t(y - theta); };
    PdmSpec p;
    p.name = name;
    p.deviance = yoke_to_deviance(k);
    p.carrier = b;
    p.reference_mu = 0.0;
    // integrability at a probe dispersion
    (void)pdm_normalizer(p, 1.0);
    return p;
}

// Pivotality diagnostics

/// Asymptotic two-sample Kolmogorov-Smirnov p-value with Stephens' correction.
inline double ks_two_sample_pvalue(double D, std::size_t n1, std::size_t n2) {
    const double en = std::sqrt(static_cast<double>(n1) * n2 / static_cast<double>(n1 + n2));
    const double lambda = (en + 0.12 + 0.11 / en) * D;
    if (lambda < 1e-3) return 1.0;
    double sum = 0.0, sign = 1.0;
    for (int k = 1; k <= 200; ++k) {
        const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
        sum += term;
        if (std::fabs(term) < 1e-16 * std::fabs(sum)) break;
        sign = -sign;
    }
    return std::clamp(2 * sum, 0.0, 1.0);
}

inline double ks_two_sample_statistic(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double D = 0.0;
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        D = std::max(D, std::fabs(i / na - j / nb));
    }
    return D;
}

/// Inverse-CDF sampler on a 2^14-point grid with monotone cubic (PCHIP)
/// interpolation of y as a function of the CDF.
class GridSampler {
public:
    GridSampler(const PdmSpec& p, double mu, double tau, std::size_t points = 1u << 14) {
        const UnitDeviance& d = p.deviance;
        double lo, hi;
        if (d.circular) {
            lo = mu - 0.5 * two_pi;
            hi = mu + 0.5 * two_pi;
        } else {
            const double s = detail::pdm_scale(d, mu, tau);
            lo = std::max(d.support.lo, mu - 40 * s);
            hi = std::min(d.support.hi, mu + 40 * s);
        }
        const double h = (hi - lo) / static_cast<double>(points - 1);
        std::vector<double> ys(points), dens(points);
        for (std::size_t i = 0; i < points; ++i) {
            ys[i] = lo + h * static_cast<double>(i);
            const bool inside = d.circular || d.support.interior().contains(ys[i]);
            dens[i] = inside ? p.carrier(ys[i]) * std::exp(-eval_deviance(d, ys[i], mu) / (2 * tau)) : 0.0;
            if (!std::isfinite(dens[i])) dens[i] = 0.0;
        }
        std::vector<double> F(points, 0.0);
        for (std::size_t i = 1; i < points; ++i) F[i] = F[i - 1] + 0.5 * h * (dens[i] + dens[i - 1]);
        const double total = F.back();
        if (!(total > 0)) throw numerical_error("sampler: density vanishes on the grid");
        std::vector<double> fx, fy;
        for (std::size_t i = 0; i < points; ++i) {
            const double f = F[i] / total;
            if (fx.empty() || f > fx.back()) {
                fx.push_back(f);
                fy.push_back(ys[i]);
            }
        }
        if (fx.size() < 256) throw numerical_error("sampler: grid too coarse for this dispersion");
        circular_ = d.circular;
        inverse_ = std::make_shared<boost::math::interpolators::pchip<std::vector<double>>>(std::move(fx), std::move(fy));
    }

    template <class Rng>
    double operator()(Rng& rng) const {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        double x = (*inverse_)(u(rng));
        return circular_ ? detail::wrap_angle(x) : x;
    }

private:
    std::shared_ptr<boost::math::interpolators::pchip<std::vector<double>>> inverse_;
    bool circular_ = false;
};

struct KsPair {
    double mu_a = 0.0, mu_b = 0.0;
    double statistic = 0.0;
    double p_value = 1.0;
};

struct PivotalReport {
    std::vector<KsPair> pairs;
    double threshold = 1e-3;
    bool passed() const {
        for (const auto& p : pairs) {
            if (!(p.p_value > threshold)) return false;
        }
        return true;
    }
};

/// Draws m values of d(Y, mu) for each mu (independent stream seed + index)
/// and compares every pair of samples with a two-sample KS test.
inline PivotalReport pivotal_check(const PdmSpec& p, const std::vector<double>& mus, double tau, std::size_t m,
                                   unsigned long long seed) {
    if (!(tau > 0)) throw domain_error("pivotal_check: tau must be positive");
    std::vector<std::vector<double>> samples;
    for (std::size_t i = 0; i < mus.size(); ++i) {
        detail::check_args(p.deviance, mus[i], mus[i]);
        GridSampler sampler(p, mus[i], tau);
        std::mt19937_64 rng(seed + i);
        std::vector<double> dev(m);
        for (auto& v : dev) v = eval_deviance(p.deviance, sampler(rng), mus[i]);
        samples.push_back(std::move(dev));
    }
    PivotalReport rep;
    for (std::size_t i = 0; i < mus.size(); ++i) {
        for (std::size_t j = i + 1; j < mus.size(); ++j) {
            const double D = ks_two_sample_statistic(samples[i], samples[j]);
            rep.pairs.push_back({mus[i], mus[j], D, ks_two_sample_pvalue(D, m, m)});
        }
    }
    return rep;
}

/// Normalizer agreement across probe means and, for regular PDMs, the
/// carrier condition b(y) V(y)^(1/2) = const.
inline Report check_pdm(const PdmSpec& p, const std::vector<double>& taus = {0.1, 1.0}) {
    Report rep;
    const auto probes = probe_grid(p.deviance.domain, 7);
    const std::vector<double> mus(probes.begin() + 1, probes.end() - 1);
    for (double tau : taus) {
        double lo = inf, hi = -inf;
        for (double mu : mus) {
            const double a = pdm_normalizer(p.deviance, p.carrier, tau, mu);
            lo = std::min(lo, a);
            hi = std::max(hi, a);
        }
        std::ostringstream os;
        os << "relative spread " << (hi - lo) / hi;
        rep.add("normalizer independent of mu (tau=" + std::to_string(tau) + ")", (hi - lo) <= 1e-6 * hi, os.str());
    }
    if (p.regular_pdm) {
        double lo = inf, hi = -inf;
        for (double y : probe_grid(p.deviance.domain, 20)) {
            const double c = p.carrier(y) * std::sqrt(unit_variance(p.deviance, y));
            lo = std::min(lo, c);
            hi = std::max(hi, c);
        }
        rep.add("carrier b = const * V^(-1/2)", (hi - lo) <= 1e-8 * std::fabs(hi));
    }
    return rep;
}

}  // namespace dispersion
