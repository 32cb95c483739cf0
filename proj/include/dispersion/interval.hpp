#pragma once

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace dispersion {

inline constexpr double inf = std::numeric_limits<double>::infinity();
inline constexpr double two_pi = 6.283185307179586476925286766559;

/// Real interval with per-endpoint open/closed flags. Membership is strict at
/// open endpoints.
struct Interval {
    double lo = -inf;
    double hi = inf;
    bool lo_closed = false;
    bool hi_closed = false;

    static Interval real_line() { return {}; }
    static Interval open(double a, double b) { return {a, b, false, false}; }
    static Interval closed(double a, double b) { return {a, b, true, true}; }
    static Interval closed_open(double a, double b) { return {a, b, true, false}; }
    static Interval positive() { return {0.0, inf, false, false}; }
    static Interval nonnegative() { return {0.0, inf, true, false}; }

    bool contains(double x) const {
        if (std::isnan(x)) return false;
        const bool above = lo_closed ? x >= lo : x > lo;
        const bool below = hi_closed ? x <= hi : x < hi;
        return above && below;
    }
    bool bounded() const { return std::isfinite(lo) && std::isfinite(hi); }
    double width() const { return hi - lo; }
    Interval interior() const { return {lo, hi, false, false}; }

    std::string str() const {
        std::ostringstream os;
        os << (lo_closed ? '[' : '(') << lo << ", " << hi << (hi_closed ? ']' : ')');
        return os.str();
    }
};

/// n probe points strictly inside `iv`. Bounded intervals are clipped inward by
/// 1e-6 of their width; half-lines are probed on a log scale away from the
/// finite end; the real line on [-10, 10].
inline std::vector<double> probe_grid(const Interval& iv, std::size_t n) {
    std::vector<double> out;
    out.reserve(n);
    if (n == 0) return out;
    const auto frac = [n](std::size_t i) {
        return n == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(n - 1);
    };
    if (iv.bounded()) {
        const double pad = 1e-6 * iv.width();
        const double a = iv.lo + pad, b = iv.hi - pad;
        for (std::size_t i = 0; i < n; ++i) out.push_back(a + (b - a) * frac(i));
    } else if (std::isfinite(iv.lo)) {
        for (std::size_t i = 0; i < n; ++i) out.push_back(iv.lo + std::pow(10.0, -2.0 + 4.0 * frac(i)));
    } else if (std::isfinite(iv.hi)) {
        for (std::size_t i = 0; i < n; ++i) out.push_back(iv.hi - std::pow(10.0, -2.0 + 4.0 * frac(i)));
    } else {
        for (std::size_t i = 0; i < n; ++i) out.push_back(-10.0 + 20.0 * frac(i));
    }
    return out;
}

}  // namespace dispersion

#include <random>

namespace dispersion {

/// Random point strictly inside `iv`, following the same scales as probe_grid.
template <class Rng>
double draw_inside(const Interval& iv, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (iv.bounded()) {
        const double pad = 1e-6 * iv.width();
        return iv.lo + pad + (iv.width() - 2 * pad) * u(rng);
    }
    if (std::isfinite(iv.lo)) return iv.lo + std::pow(10.0, -2.0 + 4.0 * u(rng));
    if (std::isfinite(iv.hi)) return iv.hi - std::pow(10.0, -2.0 + 4.0 * u(rng));
    return -10.0 + 20.0 * u(rng);
}

}  // namespace dispersion
