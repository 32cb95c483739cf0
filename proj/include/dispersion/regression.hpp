#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/tools/roots.hpp>

#include "dispersion/edm.hpp"
#include "dispersion/error.hpp"
#include "dispersion/expression.hpp"

namespace dispersion {

/// Monotone link g(mu) = eta.
struct Link {
    std::string name;
    std::function<double(double)> g;
    std::function<double(double)> inverse;
    std::function<double(double)> dmu_deta;  // 1/g'(mu) as a function of eta
};

inline Link identity_link() {
    return {"identity", [](double m) { return m; }, [](double e) { return e; }, [](double) { return 1.0; }};
}

inline Link log_link() {
    return {"log", [](double m) { return std::log(m); }, [](double e) { return std::exp(e); },
            [](double e) { return std::exp(e); }};
}

inline Link logit_link() {
    const auto inv = [](double e) { return e >= 0 ? 1 / (1 + std::exp(-e)) : std::exp(e) / (1 + std::exp(e)); };
    return {"logit", [](double m) { return std::log(m / (1 - m)); }, inv, [inv](double e) {
                const double m = inv(e);
                return m * (1 - m);
            }};
}

inline Link inverse_link() {
    return {"inverse", [](double m) { return 1 / m; }, [](double e) { return 1 / e; },
            [](double e) { return -1 / (e * e); }};
}

inline Link sqrt_link() {
    // eta must stay positive; a negative eta would alias onto the same mu
    return {"sqrt", [](double m) { return std::sqrt(m); },
            [](double e) { return e > 0 ? e * e : std::numeric_limits<double>::quiet_NaN(); },
            [](double e) { return 2 * e; }};
}

inline Link link_by_name(const std::string& name) {
    if (name == "identity") return identity_link();
    if (name == "log") return log_link();
    if (name == "logit") return logit_link();
    if (name == "inverse") return inverse_link();
    if (name == "sqrt") return sqrt_link();
    throw domain_error("unknown link '" + name + "'");
}

inline Link canonical_link(const EdmFamily& f) {
    if (f.name == "poisson" || f.name == "negative_binomial") return log_link();
    if (f.name == "binomial") return logit_link();
    if (f.name == "gamma") return inverse_link();
    return identity_link();
}

/// eta_i = f(x_i; beta). A linear predictor uses the covariate row as the
/// Jacobian row; otherwise `jacobian` is used when set, else forward differences.
struct Predictor {
    std::size_t p = 0;
    bool linear = false;
    std::function<double(const double*, const Eigen::VectorXd&)> eval;
    std::function<void(const double*, const Eigen::VectorXd&, double*)> jacobian;
    std::vector<std::string> parameter_names;
};

inline Predictor linear_predictor(std::size_t k) {
    Predictor pr;
    pr.p = k;
    pr.linear = true;
    pr.eval = [k](const double* x, const Eigen::VectorXd& b) {
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += x[j] * b[static_cast<Eigen::Index>(j)];
        return s;
    };
    for (std::size_t j = 0; j < k; ++j) pr.parameter_names.push_back("b" + std::to_string(j));
    return pr;
}

/// Predictor from an expression in covariate names and parameter names.
inline Predictor expression_predictor(const std::string& text, const std::vector<std::string>& covariates,
                                      const std::vector<std::string>& parameters) {
    std::vector<std::string> vars = covariates;
    vars.insert(vars.end(), parameters.begin(), parameters.end());
    const auto ex = Expression::parse(text, vars);
    const std::size_t k = covariates.size(), p = parameters.size();
    Predictor pr;
    pr.p = p;
    pr.parameter_names = parameters;
    pr.eval = [ex, k, p](const double* x, const Eigen::VectorXd& b) {
        std::vector<double> v(k + p);
        std::copy(x, x + k, v.begin());
        for (std::size_t j = 0; j < p; ++j) v[k + j] = b[static_cast<Eigen::Index>(j)];
        return ex(v);
    };
    return pr;
}

struct RegressionModel {
    EdmFamily family;
    Link link;
    Predictor predictor;
};

struct FitOptions {
    int max_iterations = 100;
    int max_halvings = 20;
    bool keep_trace = false;
};

struct FitResult {
    Eigen::VectorXd beta;
    Eigen::VectorXd mu;
    Eigen::VectorXd eta;
    double deviance = 0.0;
    double tau = std::numeric_limits<double>::quiet_NaN();
    std::string tau_method;
    Eigen::MatrixXd fisher_information;  // Xt' W Xt / tau
    Eigen::MatrixXd xtwx;                // Xt' W Xt at beta
    Eigen::VectorXd se;
    double score_norm = 0.0;  // max |Xt' W (z - eta)|
    int iterations = 0;
    bool converged = false;
    std::vector<Eigen::VectorXd> trace;
};

namespace detail {

inline void check_data(const RegressionModel& m, const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    if (X.rows() != y.size()) throw domain_error("X and y lengths differ");
    const auto n = static_cast<std::size_t>(y.size());
    if (n <= m.predictor.p) throw domain_error("need more observations than parameters");
    if (m.predictor.linear && static_cast<std::size_t>(X.cols()) != m.predictor.p) {
        throw domain_error("design matrix columns do not match the linear predictor");
    }
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (!m.family.support.contains(y[i])) {
            throw domain_error(m.family.name + ": y[" + std::to_string(i) + "]=" + std::to_string(y[i]) +
                               " outside support " + m.family.support.str());
        }
        if (m.family.lattice && m.family.name != "binomial" && y[i] != std::floor(y[i])) {
            throw domain_error(m.family.name + ": y must be integer");
        }
    }
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::VectorXd linear_eta(const Predictor& pr, const RowMatrix& X, const Eigen::VectorXd& b) {
    Eigen::VectorXd eta(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) eta[i] = pr.eval(X.row(i).data(), b);
    return eta;
}

inline RowMatrix jacobian(const Predictor& pr, const RowMatrix& X, const Eigen::VectorXd& b, const Eigen::VectorXd& eta) {
    if (pr.linear) return X;
    RowMatrix J(X.rows(), static_cast<Eigen::Index>(pr.p));
    if (pr.jacobian) {
        for (Eigen::Index i = 0; i < X.rows(); ++i) pr.jacobian(X.row(i).data(), b, J.row(i).data());
        return J;
    }
    for (Eigen::Index j = 0; j < J.cols(); ++j) {
        Eigen::VectorXd bj = b;
        const double h = 1e-7 * (1 + std::fabs(b[j]));
        bj[j] += h;
        const double step = bj[j] - b[j];
        for (Eigen::Index i = 0; i < X.rows(); ++i) J(i, j) = (pr.eval(X.row(i).data(), bj) - eta[i]) / step;
    }
    return J;
}

struct State {
    Eigen::VectorXd eta, mu;
    double deviance = 0.0;
    bool valid = false;
};

inline State evaluate(const RegressionModel& m, const RowMatrix& X, const Eigen::VectorXd& y, const Eigen::VectorXd& b) {
    State s;
    s.eta = linear_eta(m.predictor, X, b);
    s.mu.resize(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double mu = m.link.inverse(s.eta[i]);
        if (!std::isfinite(s.eta[i]) || !m.family.mean_domain.contains(mu)) return s;
        s.mu[i] = mu;
    }
    double d = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) d += edm_deviance(m.family, y[i], s.mu[i]);
    s.deviance = d;
    s.valid = std::isfinite(d);
    return s;
}

inline double start_mean(const EdmFamily& f, double y) {
    if (f.lattice && f.mean_domain.bounded()) return std::clamp(y, 0.01, 0.99);
    if (f.lattice) return y + 0.5;
    if (f.mean_domain.contains(y)) return y;
    // push boundary observations inside
    const Interval& iv = f.mean_domain;
    if (std::isfinite(iv.lo) && y <= iv.lo) return iv.lo + (std::isfinite(iv.hi) ? 1e-2 * iv.width() : 0.5);
    if (std::isfinite(iv.hi) && y >= iv.hi) return iv.hi - (std::isfinite(iv.lo) ? 1e-2 * iv.width() : 0.5);
    return y;
}

// Solves min |sqrt(w) (J d - r)| by column-pivoting QR; throws on rank deficiency.
inline Eigen::VectorXd weighted_solve(const RowMatrix& J, const Eigen::VectorXd& w, const Eigen::VectorXd& r) {
    const Eigen::VectorXd sw = w.cwiseSqrt();
    const Eigen::MatrixXd A = sw.asDiagonal() * J;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    qr.setThreshold(1e-10);
    if (qr.rank() < A.cols()) {
        throw domain_error("predictor Jacobian is rank deficient (rank " + std::to_string(qr.rank()) + " < " +
                           std::to_string(A.cols()) + ")");
    }
    return qr.solve(sw.cwiseProduct(r));
}

}  // namespace detail

/// Initial beta for a linear predictor: one least-squares solve of g(mu0) on X.
inline Eigen::VectorXd initial_beta(const RegressionModel& m, const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    if (!m.predictor.linear) throw domain_error("nonlinear predictors need a user-supplied beta0");
    Eigen::VectorXd z(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) z[i] = m.link.g(detail::start_mean(m.family, y[i]));
    if (!z.allFinite()) throw domain_error("link '" + m.link.name + "' undefined at the starting means");
    return detail::weighted_solve(X, Eigen::VectorXd::Ones(y.size()), z);
}

/// IRLS with w = (dmu/deta)^2/V(mu) and z = eta + (y - mu) deta/dmu; the
/// update beta + (Xt'WXt)^{-1} Xt'W(z - eta) is halved (up to max_halvings)
/// on deviance increase or when mu leaves the mean domain.
inline FitResult fit(const RegressionModel& m, const Eigen::MatrixXd& X_in, const Eigen::VectorXd& y,
                     std::optional<Eigen::VectorXd> beta0 = std::nullopt, const FitOptions& opt = {}) {
    detail::check_data(m, X_in, y);
    const detail::RowMatrix X = X_in;
    Eigen::VectorXd beta = beta0 ? *beta0 : initial_beta(m, X_in, y);
    if (static_cast<std::size_t>(beta.size()) != m.predictor.p) throw domain_error("beta0 has the wrong length");
    detail::State cur = detail::evaluate(m, X, y, beta);
    if (!cur.valid) throw domain_error("beta0 gives means outside the mean domain");

    FitResult res;
    if (opt.keep_trace) res.trace.push_back(beta);
    const auto n = y.size();
    Eigen::VectorXd w(n), r(n);
    const auto weights = [&](const detail::State& s) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double dm = m.link.dmu_deta(s.eta[i]);
            w[i] = dm * dm / variance_function(m.family, s.mu[i]);
            r[i] = (y[i] - s.mu[i]) / dm;
        }
    };
    for (res.iterations = 0; res.iterations < opt.max_iterations;) {
        weights(cur);
        const detail::RowMatrix J = detail::jacobian(m.predictor, X, beta, cur.eta);
        const Eigen::VectorXd step = detail::weighted_solve(J, w, r);
        ++res.iterations;
        double scale = 1.0;
        Eigen::VectorXd next;
        detail::State trial;
        int halvings = 0;
        for (;; ++halvings) {
            next = beta + scale * step;
            trial = detail::evaluate(m, X, y, next);
            if (trial.valid && trial.deviance <= cur.deviance * (1 + 1e-12) + 1e-300) break;
            if (halvings == opt.max_halvings) {
                throw numerical_error("IRLS diverged: deviance did not decrease after " +
                                      std::to_string(opt.max_halvings) + " step halvings");
            }
            scale *= 0.5;
        }
        const double change = (next - beta).cwiseAbs().maxCoeff();
        const double size = beta.cwiseAbs().maxCoeff();
        beta = next;
        cur = trial;
        if (opt.keep_trace) res.trace.push_back(beta);
        if (change < 1e-8 * (1 + size)) {
            res.converged = true;
            break;
        }
    }
    weights(cur);
    const detail::RowMatrix J = detail::jacobian(m.predictor, X, beta, cur.eta);
    res.beta = beta;
    res.mu = cur.mu;
    res.eta = cur.eta;
    res.deviance = cur.deviance;
    res.xtwx = J.transpose() * w.asDiagonal() * J;
    res.score_norm = (J.transpose() * w.cwiseProduct(r)).cwiseAbs().maxCoeff();
    return res;
}

/// sum_i d(y_i; mu_i)
inline double total_deviance(const EdmFamily& f, const Eigen::VectorXd& y, const Eigen::VectorXd& mu) {
    if (y.size() != mu.size()) throw domain_error("y and mu lengths differ");
    double d = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) d += edm_deviance(f, y[i], mu[i]);
    return d;
}

/// Pearson-type moment estimate sum (y - mu)^2/V(mu) / (n - p).
inline double estimate_tau_moment(const RegressionModel& m, const FitResult& fr, const Eigen::VectorXd& y) {
    const auto n = static_cast<std::size_t>(y.size());
    if (n <= m.predictor.p) throw domain_error("need n > p");
    double s = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double e = y[i] - fr.mu[i];
        s += e * e / variance_function(m.family, fr.mu[i]);
    }
    return s / static_cast<double>(n - m.predictor.p);
}

/// Families whose normalizer splits as a(y)/tau + d(tau) + e(y) with d = -log(tau)/2,
/// giving tau_mle = D/n.
inline bool has_closed_form_tau(const EdmFamily& f) { return f.name == "normal" || f.name == "inverse_gaussian"; }

/// Root of tau^2 sum dc/dtau(y_i; tau) = sum l(y_i; y_i) - D/2 in log tau,
/// bracketed on [1e-10, 1e10] and polished by TOMS 748.
inline double estimate_tau_mle(const RegressionModel& m, const FitResult& fr, const Eigen::VectorXd& y) {
    const EdmFamily& f = m.family;
    if (f.unit_dispersion) throw domain_error(f.name + ": dispersion is fixed at 1");
    const auto n = y.size();
    if (has_closed_form_tau(f)) return fr.deviance / static_cast<double>(n);
    if (!f.dc_dtau && !f.log_normalizer) throw domain_error(f.name + ": no exact normalizer; use the moment estimator");
    double rhs = -0.5 * fr.deviance;
    for (Eigen::Index i = 0; i < n; ++i) rhs += saturated_loglik(f, y[i]);
    const auto dc = [&](double yi, double tau) {
        if (f.dc_dtau) return f.dc_dtau(yi, tau);
        const double h = 1e-5 * tau;
        return (f.log_normalizer(yi, tau + h) - f.log_normalizer(yi, tau - h)) / (2 * h);
    };
    const auto F = [&](double s) {
        const double tau = std::exp(s);
        double acc = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) acc += dc(y[i], tau);
        return tau * tau * acc - rhs;
    };
    const double lo = std::log(1e-10), hi = std::log(1e10);
    const int grid = 200;
    double a = lo, fa = F(a);
    for (int k = 1; k <= grid; ++k) {
        const double b = lo + (hi - lo) * k / grid;
        const double fb = F(b);
        if (fa == 0.0) return std::exp(a);
        if (std::isfinite(fa) && std::isfinite(fb) && (fa < 0) != (fb < 0)) {
            boost::uintmax_t it = 200;
            const auto r = boost::math::tools::toms748_solve(F, a, b, fa, fb,
                                                              boost::math::tools::eps_tolerance<double>(50), it);
            return std::exp(0.5 * (r.first + r.second));
        }
        a = b;
        fa = fb;
    }
    throw numerical_error("tau MLE not bracketed in [1e-10, 1e10]");
}

/// Attaches tau, Fisher information and standard errors.
inline void attach_dispersion(FitResult& fr, double tau, const std::string& method) {
    fr.tau = tau;
    fr.tau_method = method;
    fr.fisher_information = fr.xtwx / tau;
    const Eigen::MatrixXd cov = fr.fisher_information.inverse();
    fr.se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
}

}  // namespace dispersion
