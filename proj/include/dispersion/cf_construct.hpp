#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <fftw3.h>

#include "dispersion/deviance.hpp"
#include "dispersion/expression.hpp"
#include "dispersion/numeric.hpp"
#include "dispersion/report.hpp"

namespace dispersion {

/// Real, symmetric characteristic function. `one_minus_phi` is an optional
/// cancellation-free 1 - phi(t); `m2` is the second moment (NaN if infinite).
struct CfSpec {
    std::string name;
    std::function<double(double)> phi;
    std::function<double(double)> one_minus_phi;
    double m2 = std::numeric_limits<double>::quiet_NaN();
    bool vanishes_at_infinity = true;  // phi(t) -> 0, so the kernel plateau is exp(-1/(2 tau))

    double complement(double t) const { return one_minus_phi ? one_minus_phi(t) : 1.0 - phi(t); }
    bool regular() const { return std::isfinite(m2); }
};

/// phi(0) = 1, |phi| <= 1, phi(t) = phi(-t), and |phi(t)| < 1 away from 0 (non-lattice).
inline Report check_cf(const CfSpec& cf) {
    Report rep;
    rep.add("phi(0) = 1", cf.phi(0.0) == 1.0);
    bool bounded = true, symmetric = true, nonlattice = true;
    std::string bw, sw, nw;
    for (int i = 0; i < 64; ++i) {
        const double t = 0.05 + 49.95 * i / 63.0;  // away from 0, where 1 - phi underflows
        const double a = cf.phi(t), b = cf.phi(-t);
        if (!(std::fabs(a) <= 1.0)) {
            bounded = false;
            bw = "t=" + std::to_string(t);
        }
        if (!(std::fabs(a - b) < 1e-12)) {
            symmetric = false;
            sw = "t=" + std::to_string(t);
        }
        if (!(std::fabs(a) < 1.0)) {
            nonlattice = false;
            nw = "t=" + std::to_string(t);
        }
    }
    // a lattice cf returns to modulus 1 at isolated points; look for them
    // between scan points by refining local maxima of |phi|
    if (nonlattice) {
        const int n = 4096;
        const double lo = 0.05, step = (50.0 - lo) / n;
        const auto mod = [&](double t) { return std::fabs(cf.phi(t)); };
        double prev = mod(lo), cur = mod(lo + step);
        for (int i = 1; i < n && nonlattice; ++i) {
            const double t = lo + step * i;
            const double next = mod(t + step);
            if (cur >= prev && cur >= next) {
                const double x = numeric::golden_section_max(mod, t - step, t + step, 1e-12);
                if (std::max(mod(x), cur) > 1.0 - 1e-9) {
                    nonlattice = false;
                    nw = "t=" + std::to_string(x);
                }
            }
            prev = cur;
            cur = next;
        }
    }
    rep.add("|phi| <= 1", bounded, bw);
    rep.add("symmetric", symmetric, sw);
    rep.add("non-lattice (|phi| < 1 off zero)", nonlattice, nw);
    return rep;
}

inline CfSpec validated(CfSpec cf) {
    const Report rep = check_cf(cf);
    if (!rep.passed()) {
        std::string why;
        for (const auto& it : rep.items) {
            if (!it.passed) why += " " + it.name + (it.detail.empty() ? "" : " (" + it.detail + ")");
        }
        throw domain_error("characteristic function '" + cf.name + "' rejected:" + why);
    }
    return cf;
}

inline CfSpec gaussian_cf() {
    CfSpec cf;
    cf.name = "gauss";
    cf.phi = [](double t) { return std::exp(-0.5 * t * t); };
    cf.one_minus_phi = [](double t) { return -std::expm1(-0.5 * t * t); };
    cf.m2 = 1.0;
    return validated(cf);
}

inline CfSpec laplace_cf() {
    CfSpec cf;
    cf.name = "laplace-cf";
    cf.phi = [](double t) { return 1 / (1 + t * t); };
    cf.one_minus_phi = [](double t) { return t * t / (1 + t * t); };
    cf.m2 = 2.0;
    return validated(cf);
}

inline CfSpec triangular_cf() {
    CfSpec cf;
    cf.name = "triangular-cf";
    // 2(1 - cos t)/t^2 = sinc(t/2)^2
    const auto sinc = [](double x) { return std::fabs(x) < 1e-4 ? 1 - x * x / 6 : std::sin(x) / x; };
    const auto one_minus_sinc = [](double x) {
        if (std::fabs(x) < 1e-2) {
            const double x2 = x * x;
            return x2 / 6 - x2 * x2 / 120 + x2 * x2 * x2 / 5040;
        }
        return 1 - std::sin(x) / x;
    };
    cf.phi = [sinc](double t) {
        const double s = sinc(0.5 * t);
        return s * s;
    };
    cf.one_minus_phi = [sinc, one_minus_sinc](double t) {
        return one_minus_sinc(0.5 * t) * (1 + sinc(0.5 * t));
    };
    cf.m2 = 1.0 / 6.0;
    return validated(cf);
}

inline CfSpec cauchy_cf() {
    CfSpec cf;
    cf.name = "cauchy";
    cf.phi = [](double t) { return std::exp(-std::fabs(t)); };
    cf.one_minus_phi = [](double t) { return -std::expm1(-std::fabs(t)); };
    return validated(cf);
}

/// User characteristic function given as an expression in t.
inline CfSpec expression_cf(const std::string& text, double m2 = std::numeric_limits<double>::quiet_NaN()) {
    auto ex = Expression::parse(text, {"t"});
    CfSpec cf;
    cf.name = "expr:" + text;
    cf.phi = [ex](double t) { return ex(t); };
    cf.m2 = m2;
    return validated(cf);
}

inline CfSpec cf_by_name(const std::string& name) {
    if (name == "gauss") return gaussian_cf();
    if (name == "laplace-cf") return laplace_cf();
    if (name == "triangular-cf") return triangular_cf();
    if (name == "cauchy") return cauchy_cf();
    throw domain_error("unknown characteristic function '" + name + "'");
}

/// d(y; mu) = 1 - phi(y - mu).
inline double cf_deviance(const CfSpec& cf, double y, double mu) {
    if (!std::isfinite(y) || !std::isfinite(mu)) throw domain_error("cf_deviance: arguments must be finite");
    if (y == mu) return 0.0;
    return std::max(0.0, cf.complement(y - mu));
}

inline UnitDeviance cf_unit_deviance(const CfSpec& cf) {
    UnitDeviance d;
    d.name = "cf:" + cf.name;
    d.support = d.domain = Interval::real_line();
    d.regular = cf.regular();
    d.eval = [cf](double y, double mu) { return cf_deviance(cf, y, mu); };
    return d;
}

/// K_tau(t) = exp{-[1 - phi(t)]/(2 tau)}.
inline double kernel(const CfSpec& cf, double tau, double t) {
    if (!(tau > 0)) throw domain_error("kernel: tau must be positive");
    return std::exp(-cf.complement(t) / (2 * tau));
}

inline double kernel_plateau(const CfSpec& cf, double tau) {
    return cf.vanishes_at_infinity ? std::exp(-1 / (2 * tau)) : 0.0;
}

/// Largest |t| <= limit where K exceeds its plateau by more than 1e-3.
inline double kernel_effective_support(const CfSpec& cf, double tau, double limit) {
    const double plateau = kernel_plateau(cf, tau);
    const int n = 200000;
    double last = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double t = limit * i / n;
        if (kernel(cf, tau, t) - plateau > 1e-3) last = t;
    }
    return last;
}

/// Kernel sampled on the grid: value(t, h) for lag t at spacing h.
using GridKernel = std::function<double(double, double)>;

struct SolverOptions {
    std::size_t coarse_points = 256;   // first level of the coarse-to-fine ladder
    std::size_t budget = 10000;        // Hessian products per level
    double continuation = 1e6;         // lambda starts at continuation*lambda on the coarse level
};

struct GridSolution {
    std::vector<double> grid;
    double h = 0.0;
    double L = 0.0;
    std::vector<double> a_values;
    double tau = 0.0;
    double lambda_reg = 0.0;
    double edge_band = 0.0;
    double residual = 0.0;  // max |a*K - 1| over |mu| <= L - edge_band
    bool converged = false;
    bool ill_posed = false;  // residual > 0.1
    std::size_t products = 0;
};

namespace detail {

inline std::mutex& fftw_plan_mutex() {
    static std::mutex m;
    return m;
}

// y = h * (K * x) on an N-point grid, by circulant embedding of size 2N.
class ToeplitzOperator {
public:
    ToeplitzOperator(const GridKernel& k, std::size_t n, double h) : n_(n), m_(2 * n), h_(h) {
        in_ = fftw_alloc_real(m_);
        out_ = fftw_alloc_complex(m_ / 2 + 1);
        {
            std::lock_guard lock(fftw_plan_mutex());
            fwd_ = fftw_plan_dft_r2c_1d(static_cast<int>(m_), in_, out_, FFTW_ESTIMATE);
            bwd_ = fftw_plan_dft_c2r_1d(static_cast<int>(m_), out_, in_, FFTW_ESTIMATE);
        }
        std::fill(in_, in_ + m_, 0.0);
        for (std::size_t j = 0; j < n_; ++j) in_[j] = k(static_cast<double>(j) * h, h);
        for (std::size_t j = 1; j < n_; ++j) in_[m_ - j] = in_[j];
        fftw_execute(fwd_);
        spectrum_.resize(m_ / 2 + 1);
        for (std::size_t j = 0; j < spectrum_.size(); ++j) spectrum_[j] = {out_[j][0], out_[j][1]};
    }
    ToeplitzOperator(const ToeplitzOperator&) = delete;
    ToeplitzOperator& operator=(const ToeplitzOperator&) = delete;
    ~ToeplitzOperator() {
        std::lock_guard lock(fftw_plan_mutex());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
        fftw_free(in_);
        fftw_free(out_);
    }

    void apply(const std::vector<double>& x, std::vector<double>& y) {
        std::copy(x.begin(), x.end(), in_);
        std::fill(in_ + n_, in_ + m_, 0.0);
        fftw_execute(fwd_);
        for (std::size_t j = 0; j < spectrum_.size(); ++j) {
            const std::complex<double> v = std::complex<double>(out_[j][0], out_[j][1]) * spectrum_[j];
            out_[j][0] = v.real();
            out_[j][1] = v.imag();
        }
        fftw_execute(bwd_);
        y.resize(n_);
        const double s = h_ / static_cast<double>(m_);
        for (std::size_t j = 0; j < n_; ++j) y[j] = s * in_[j];
    }

private:
    std::size_t n_, m_;
    double h_;
    double* in_ = nullptr;
    fftw_complex* out_ = nullptr;
    fftw_plan fwd_ = nullptr, bwd_ = nullptr;
    std::vector<std::complex<double>> spectrum_;
};

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

// min 0.5 a'(A'A + lambda I)a - (A'1)'a subject to a >= 0: gradient
// projection to settle the active set, then CG on the free variables.
class NonnegativeLeastSquares {
public:
    NonnegativeLeastSquares(ToeplitzOperator& A, std::size_t n, double lambda)
        : A_(A), n_(n), lambda_(lambda), tmp_(n) {
        std::vector<double> ones(n, 1.0);
        A_.apply(ones, atb_);  // A is symmetric
    }

    std::size_t products() const { return products_; }

    bool solve(std::vector<double>& a, std::size_t budget) {
        std::vector<double> Ha, g(n_), gf(n_), Hg, an(n_), Han, x, r, p, Hp, dir(n_);
        hess(a, Ha);
        const double gnorm0 = max_abs(atb_);
        std::size_t start = products_;
        const auto spent = [&] { return products_ - start; };
        while (spent() < budget) {
            for (std::size_t i = 0; i < n_; ++i) g[i] = Ha[i] - atb_[i];
            double pg = 0.0;
            for (std::size_t i = 0; i < n_; ++i) {
                if (a[i] > 0 || g[i] < 0) pg = std::max(pg, std::fabs(g[i]));
            }
            if (pg < 1e-12 * gnorm0) return true;

            // gradient projection
            double fa = objective(a, Ha), best = 0.0;
            for (int k = 0; k < 50 && spent() < budget; ++k) {
                for (std::size_t i = 0; i < n_; ++i) {
                    g[i] = Ha[i] - atb_[i];
                    gf[i] = (a[i] > 0 || g[i] < 0) ? g[i] : 0.0;
                }
                hess(gf, Hg);
                double step = dot(gf, gf) / std::max(dot(gf, Hg), 1e-300);
                double fn = 0.0;
                for (int ls = 0; ls < 60; ++ls) {
                    for (std::size_t i = 0; i < n_; ++i) an[i] = std::max(a[i] - step * g[i], 0.0);
                    hess(an, Han);
                    fn = objective(an, Han);
                    double lin = 0.0;
                    for (std::size_t i = 0; i < n_; ++i) lin += g[i] * (an[i] - a[i]);
                    if (fn <= fa + 1e-4 * lin) break;
                    step *= 0.5;
                }
                const double dec = fa - fn;
                bool same = true;
                for (std::size_t i = 0; i < n_; ++i) {
                    if ((a[i] == 0) != (an[i] == 0)) {
                        same = false;
                        break;
                    }
                }
                a.swap(an);
                Ha.swap(Han);
                fa = fn;
                best = std::max(best, dec);
                if (same || dec <= 0.1 * best) break;
            }

            // conjugate gradients on the free face
            for (std::size_t i = 0; i < n_; ++i) g[i] = Ha[i] - atb_[i];
            x = a;
            r.assign(n_, 0.0);
            for (std::size_t i = 0; i < n_; ++i) r[i] = a[i] > 0 ? -g[i] : 0.0;
            p = r;
            double rr = dot(r, r), best_dec = 0.0;
            for (int it = 0; it < 2000 && rr > 0 && spent() < budget; ++it) {
                hess(p, Hp);
                for (std::size_t i = 0; i < n_; ++i) {
                    if (!(a[i] > 0)) Hp[i] = 0.0;
                }
                const double alpha = rr / std::max(dot(p, Hp), 1e-300);
                bool negative = false;
                for (std::size_t i = 0; i < n_; ++i) {
                    x[i] += alpha * p[i];
                    r[i] -= alpha * Hp[i];
                    if (x[i] < 0) negative = true;
                }
                const double rrn = dot(r, r);
                const double dec = 0.5 * alpha * rr;
                best_dec = std::max(best_dec, dec);
                for (std::size_t i = 0; i < n_; ++i) p[i] = r[i] + (rrn / rr) * p[i];
                rr = rrn;
                if (negative || dec <= 1e-3 * best_dec) break;
            }
            for (std::size_t i = 0; i < n_; ++i) dir[i] = x[i] - a[i];
            double step = 1.0;
            for (int ls = 0; ls < 40; ++ls) {
                for (std::size_t i = 0; i < n_; ++i) an[i] = std::max(a[i] + step * dir[i], 0.0);
                hess(an, Han);
                const double fn = objective(an, Han);
                double lin = 0.0;
                for (std::size_t i = 0; i < n_; ++i) lin += g[i] * (an[i] - a[i]);
                if (fn <= fa + 1e-4 * lin || step < 1e-10) break;
                step *= 0.5;
            }
            a.swap(an);
            Ha.swap(Han);
        }
        return false;
    }

private:
    void hess(const std::vector<double>& v, std::vector<double>& out) {
        A_.apply(v, tmp_);
        A_.apply(tmp_, out);
        for (std::size_t i = 0; i < n_; ++i) out[i] += lambda_ * v[i];
        ++products_;
    }
    double objective(const std::vector<double>& a, const std::vector<double>& Ha) const {
        return 0.5 * dot(a, Ha) - dot(atb_, a);
    }
    static double max_abs(const std::vector<double>& v) {
        double m = 0.0;
        for (double x : v) m = std::max(m, std::fabs(x));
        return m;
    }

    ToeplitzOperator& A_;
    std::size_t n_;
    double lambda_;
    std::vector<double> atb_, tmp_;
    std::size_t products_ = 0;
};

inline std::vector<double> uniform_grid(double L, std::size_t n) {
    std::vector<double> y(n);
    const double h = 2 * L / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) y[i] = -L + h * static_cast<double>(i);
    return y;
}

inline double interior_residual(const std::vector<double>& grid, const std::vector<double>& conv, double L, double band) {
    double worst = 0.0;
    bool any = false;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (std::fabs(grid[i]) <= L - band) {
            worst = std::max(worst, std::fabs(conv[i] - 1.0));
            any = true;
        }
    }
    if (!any) throw domain_error("edge band covers the whole grid; increase L");
    return worst;
}

}  // namespace detail

/// Solves min |A a - 1|^2 + lambda |a|^2, a >= 0, for A_ij = h K(y_i - y_j)
/// on N points of [-L, L]; coarse-to-fine from options.coarse_points with
/// warm starts, and lambda continuation on the coarsest level.
inline GridSolution solve_grid_equation(const GridKernel& k, double L, std::size_t N, double lambda, double edge_band,
                                        const SolverOptions& opt = {}) {
    if (!(L > 0)) throw domain_error("L must be positive");
    if (N < 4 || (N & (N - 1)) != 0) throw domain_error("N must be a power of two");
    if (!(lambda >= 0)) throw domain_error("lambda_reg must be nonnegative");
    std::size_t n = std::min(opt.coarse_points, N);
    std::vector<double> a;
    std::vector<double> coarse_grid;
    GridSolution sol;
    bool converged = true;
    std::size_t products = 0;
    for (;; n *= 2) {
        const auto grid = detail::uniform_grid(L, n);
        const double h = grid[1] - grid[0];
        detail::ToeplitzOperator A(k, n, h);
        if (a.empty()) {
            a.assign(n, 0.0);
            if (lambda > 0) {
                for (double f = opt.continuation; f > 1.0; f /= 10.0) {
                    detail::NonnegativeLeastSquares stage(A, n, lambda * f);
                    stage.solve(a, std::max<std::size_t>(opt.budget / 10, 1));
                    products += stage.products();
                }
            }
        } else {
            // linear interpolation of the previous level, clipped at zero
            std::vector<double> fine(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double pos = (grid[i] + L) / (coarse_grid[1] - coarse_grid[0]);
                const std::size_t j = std::min(static_cast<std::size_t>(pos), coarse_grid.size() - 2);
                const double w = pos - static_cast<double>(j);
                fine[i] = std::max(0.0, (1 - w) * a[j] + w * a[j + 1]);
            }
            a.swap(fine);
        }
        detail::NonnegativeLeastSquares nnls(A, n, lambda);
        const bool ok = nnls.solve(a, opt.budget);
        products += nnls.products();
        if (n == N) {
            converged = ok;
            std::vector<double> conv;
            A.apply(a, conv);
            sol.grid = grid;
            sol.h = h;
            sol.residual = detail::interior_residual(grid, conv, L, edge_band);
            break;
        }
        coarse_grid = grid;
    }
    sol.L = L;
    sol.a_values = std::move(a);
    sol.lambda_reg = lambda;
    sol.edge_band = edge_band;
    sol.converged = converged;
    sol.ill_posed = sol.residual > 0.1;
    sol.products = products;
    return sol;
}

/// Default Tikhonov weight 1e-8 |A|_2^2 (power iteration on the grid operator).
inline double default_lambda(const CfSpec& cf, double tau, double L, std::size_t N) {
    const auto grid = detail::uniform_grid(L, N);
    const double h = grid[1] - grid[0];
    detail::ToeplitzOperator A([&](double t, double) { return kernel(cf, tau, t); }, N, h);
    std::vector<double> v(N, 1.0), w;
    double norm = 0.0;
    for (int it = 0; it < 100; ++it) {
        A.apply(v, w);
        const double nw = std::sqrt(detail::dot(w, w)), nv = std::sqrt(detail::dot(v, v));
        const double est = nw / nv;
        if (std::fabs(est - norm) < 1e-10 * est) {
            norm = est;
            break;
        }
        norm = est;
        for (std::size_t i = 0; i < N; ++i) v[i] = w[i] / nw;
    }
    return 1e-8 * norm * norm;
}

/// Normalizer a(y; tau) of the cf-based dispersion model on [-L, L].
inline GridSolution solve_normalizer(const CfSpec& cf, double tau, double L, std::size_t N, double lambda,
                                     const SolverOptions& opt = {}) {
    if (!(tau > 0)) throw domain_error("tau must be positive");
    if (N < 1024 || (N & (N - 1)) != 0) throw domain_error("N must be a power of two >= 1024");
    const double plateau = kernel_plateau(cf, tau);
    if (kernel(cf, tau, L) - plateau > 1e-3) {
        std::ostringstream os;
        os << "L=" << L << " too small: kernel has not reached its plateau (K(L) - plateau > 1e-3)";
        throw domain_error(os.str());
    }
    const double band = kernel_effective_support(cf, tau, L);
    auto sol = solve_grid_equation([&](double t, double) { return kernel(cf, tau, t); }, L, N, lambda, band, opt);
    sol.tau = tau;
    return sol;
}

/// max over interior mu_i of |sum_j h K(mu_i - y_j) a_j - 1| by direct
/// summation with freshly evaluated kernel values.
inline double convolution_residual(const GridSolution& sol, const GridKernel& k) {
    const std::size_t n = sol.grid.size();
    std::vector<double> lag(n);
    for (std::size_t j = 0; j < n; ++j) lag[j] = k(static_cast<double>(j) * sol.h, sol.h);
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (std::fabs(sol.grid[i]) > sol.L - sol.edge_band) continue;
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t d = i > j ? i - j : j - i;
            s += lag[d] * sol.a_values[j];
        }
        worst = std::max(worst, std::fabs(sol.h * s - 1.0));
    }
    return worst;
}

inline double convolution_residual(const GridSolution& sol, const CfSpec& cf) {
    return convolution_residual(sol, [&](double t, double) { return kernel(cf, sol.tau, t); });
}

/// max/min over the common interior of a1(y)/a2(y), where both are positive.
/// A PDM normalizer factorizes, so this would be 1.
inline double ratio_of_ratios(const GridSolution& s1, const GridSolution& s2) {
    if (s1.grid.size() != s2.grid.size() || s1.L != s2.L) throw domain_error("ratio_of_ratios: grids differ");
    const double band = std::max(s1.edge_band, s2.edge_band);
    double lo = inf, hi = 0.0;
    for (std::size_t i = 0; i < s1.grid.size(); ++i) {
        if (std::fabs(s1.grid[i]) > s1.L - band) continue;
        if (s1.a_values[i] > 0 && s2.a_values[i] > 0) {
            const double r = s1.a_values[i] / s2.a_values[i];
            lo = std::min(lo, r);
            hi = std::max(hi, r);
        }
    }
    if (!(hi > 0)) throw numerical_error("ratio_of_ratios: no common positive interior points");
    return hi / lo;
}

}  // namespace dispersion
