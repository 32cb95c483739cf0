#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include <boost/math/special_functions/digamma.hpp>

#include "dispersion/regression.hpp"

using namespace dispersion;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

RegressionModel linear_model(const EdmFamily& f, const Link& g, std::size_t p) { return {f, g, linear_predictor(p)}; }

Eigen::MatrixXd design(const std::vector<double>& x) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(x.size()), 2);
    for (std::size_t i = 0; i < x.size(); ++i) {
        X(static_cast<Eigen::Index>(i), 0) = 1;
        X(static_cast<Eigen::Index>(i), 1) = x[i];
    }
    return X;
}

// plain Fisher scoring with normal equations
Eigen::VectorXd naive_glm(const std::function<double(double)>& inv, const std::function<double(double)>& dinv,
                          const std::function<double(double)>& V, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          Eigen::VectorXd b) {
    for (int it = 0; it < 200; ++it) {
        const Eigen::VectorXd eta = X * b;
        Eigen::VectorXd w(y.size()), z(y.size());
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            const double m = inv(eta[i]), d = dinv(eta[i]);
            w[i] = d * d / V(m);
            z[i] = eta[i] + (y[i] - m) / d;
        }
        const Eigen::MatrixXd A = X.transpose() * w.asDiagonal() * X;
        const Eigen::VectorXd nb = A.ldlt().solve(X.transpose() * w.cwiseProduct(z));
        const double change = (nb - b).cwiseAbs().maxCoeff();
        b = nb;
        if (change < 1e-13) break;
    }
    return b;
}

}  // namespace

TEST_CASE("links") {
    for (const auto& name : {"identity", "log", "logit", "inverse", "sqrt"}) {
        const auto g = link_by_name(name);
        const double mu = 0.3;
        CHECK_THAT(g.inverse(g.g(mu)), WithinRel(mu, 1e-14));
        const double eta = g.g(mu), h = 1e-6;
        CHECK_THAT(g.dmu_deta(eta), WithinRel((g.inverse(eta + h) - g.inverse(eta - h)) / (2 * h), 1e-7));
    }
    CHECK(std::isnan(sqrt_link().inverse(-1)));
    CHECK_THROWS_AS(link_by_name("probit"), domain_error);
    CHECK(canonical_link(poisson_family()).name == "log");
    CHECK(canonical_link(binomial_family()).name == "logit");
    CHECK(canonical_link(normal_family()).name == "identity");
}

TEST_CASE("Poisson intercept-only") {
    const Eigen::VectorXd y = (Eigen::VectorXd(6) << 0, 1, 2, 3, 4, 2).finished();
    const Eigen::MatrixXd X = Eigen::MatrixXd::Ones(6, 1);
    const auto m = linear_model(poisson_family(), log_link(), 1);
    const auto r = fit(m, X, y);
    CHECK(r.converged);
    CHECK_THAT(r.beta[0], WithinAbs(std::log(2.0), 1e-10));
    CHECK(r.score_norm < 1e-6);
}

TEST_CASE("normal identity is least squares") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> e(0, 0.5);
    std::vector<double> x(40);
    Eigen::VectorXd y(40);
    for (int i = 0; i < 40; ++i) {
        x[i] = 0.1 * i;
        y[i] = 1 - 2 * x[i] + e(rng);
    }
    const auto X = design(x);
    const Eigen::VectorXd ols = (X.transpose() * X).ldlt().solve(X.transpose() * y);
    const auto r = fit(linear_model(normal_family(), identity_link(), 2), X, y);
    CHECK((r.beta - ols).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(r.iterations <= 3);
    // tau_mle = D/n for the normal
    const auto m = linear_model(normal_family(), identity_link(), 2);
    CHECK(estimate_tau_mle(m, r, y) == r.deviance / 40);
}

TEST_CASE("agrees with plain Fisher scoring") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> ux(-1, 1);
    std::vector<double> x(120);
    for (auto& v : x) v = ux(rng);
    const auto X = design(x);
    Eigen::VectorXd yp(120), yb(120), yg(120);
    for (int i = 0; i < 120; ++i) {
        const double eta = 0.3 + 0.7 * x[i];
        yp[i] = std::poisson_distribution<int>(std::exp(eta))(rng);
        yb[i] = std::bernoulli_distribution(1 / (1 + std::exp(-eta)))(rng);
        yg[i] = std::gamma_distribution<double>(4.0, std::exp(eta) / 4)(rng);
    }
    const Eigen::VectorXd b0 = Eigen::VectorXd::Zero(2);
    const auto ex = [](double e) { return std::exp(e); };
    const auto lg = [](double e) { return 1 / (1 + std::exp(-e)); };
    const auto dlg = [lg](double e) { return lg(e) * (1 - lg(e)); };

    const auto rp = fit(linear_model(poisson_family(), log_link(), 2), X, yp);
    CHECK((rp.beta - naive_glm(ex, ex, [](double m) { return m; }, X, yp, b0)).cwiseAbs().maxCoeff() < 1e-8);
    const auto rb = fit(linear_model(binomial_family(), logit_link(), 2), X, yb);
    CHECK((rb.beta - naive_glm(lg, dlg, [](double m) { return m * (1 - m); }, X, yb, b0)).cwiseAbs().maxCoeff() < 1e-8);
    const auto rg = fit(linear_model(gamma_family(), log_link(), 2), X, yg);
    CHECK((rg.beta - naive_glm(ex, ex, [](double m) { return m * m; }, X, yg, b0)).cwiseAbs().maxCoeff() < 1e-8);
    for (const auto* r : {&rp, &rb, &rg}) {
        CHECK(r->converged);
        CHECK(r->score_norm < 1e-6);
        CHECK((r->xtwx - r->xtwx.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("gamma log-link recovery") {
    const int n = 200, reps = 200;
    const double shape = 5, b0 = 0.5, b1 = -0.8;
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> ux(0, 2);
    std::vector<double> x(n);
    for (auto& v : x) v = ux(rng);
    const auto X = design(x);
    const auto m = linear_model(gamma_family(), log_link(), 2);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(2), sq = Eigen::VectorXd::Zero(2);
    for (int r = 0; r < reps; ++r) {
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i) y[i] = std::gamma_distribution<double>(shape, std::exp(b0 + b1 * x[i]) / shape)(rng);
        const auto f = fit(m, X, y);
        mean += f.beta;
        sq += f.beta.cwiseProduct(f.beta);
    }
    mean /= reps;
    const Eigen::VectorXd sd = (sq / reps - mean.cwiseProduct(mean)).cwiseSqrt();
    CHECK(std::fabs(mean[0] - b0) < 3 * sd[0] / std::sqrt(reps));
    CHECK(std::fabs(mean[1] - b1) < 3 * sd[1] / std::sqrt(reps));
}

TEST_CASE("total deviance") {
    const auto g = gamma_family();
    const Eigen::VectorXd y = (Eigen::VectorXd(2) << 2, 1).finished();
    const Eigen::VectorXd mu = (Eigen::VectorXd(2) << 1, 2).finished();
    const double d = total_deviance(g, y, mu);
    CHECK_THAT(d, WithinRel(edm_deviance(g, 2, 1) + edm_deviance(g, 1, 2), 1e-15));
    CHECK_THAT(edm_deviance(g, 2, 1), WithinRel(0.6137056388801094, 1e-12));
    CHECK_THROWS_AS(total_deviance(g, y, Eigen::VectorXd::Ones(3)), domain_error);
}

TEST_CASE("beta path does not depend on tau") {
    std::mt19937_64 rng(5);
    std::vector<double> x(50);
    Eigen::VectorXd y(50);
    for (int i = 0; i < 50; ++i) {
        x[i] = 0.05 * i;
        y[i] = std::gamma_distribution<double>(2.0, std::exp(0.2 + 0.5 * x[i]) / 2)(rng);
    }
    FitOptions opt;
    opt.keep_trace = true;
    const auto m = linear_model(gamma_family(), log_link(), 2);
    auto a = fit(m, design(x), y, std::nullopt, opt);
    auto b = a;
    attach_dispersion(a, 0.1, "given");
    attach_dispersion(b, 10, "given");
    REQUIRE(a.trace.size() == b.trace.size());
    CHECK(a.beta == b.beta);
    CHECK_THAT(b.se[1] / a.se[1], WithinRel(10.0, 1e-12));
    CHECK((a.fisher_information * 0.1 - a.xtwx).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("dispersion estimators") {
    std::mt19937_64 rng(77);
    const int n = 500;
    std::vector<double> x(n);
    for (int i = 0; i < n; ++i) x[i] = std::uniform_real_distribution<double>(0, 1)(rng);
    const auto X = design(x);

    Eigen::VectorXd yp(n), yg(n);
    for (int i = 0; i < n; ++i) {
        yp[i] = std::poisson_distribution<int>(std::exp(1 + 0.5 * x[i]))(rng);
        yg[i] = std::gamma_distribution<double>(4.0, std::exp(0.5 * x[i]) / 4)(rng);
    }
    const auto mp = linear_model(poisson_family(), log_link(), 2);
    const auto fp = fit(mp, X, yp);
    const double tp = estimate_tau_moment(mp, fp, yp);
    CHECK(tp > 0.8);
    CHECK(tp < 1.2);
    CHECK_THROWS_AS(estimate_tau_mle(mp, fp, yp), domain_error);

    const auto mg = linear_model(gamma_family(), log_link(), 2);
    const auto fg = fit(mg, X, yg);
    const double mle = estimate_tau_mle(mg, fg, yg), mom = estimate_tau_moment(mg, fg, yg);
    CHECK_THAT(mle, WithinRel(0.25, 0.15));
    CHECK_THAT(mom, WithinRel(0.25, 0.15));
    // the gamma dispersion score vanishes at the root
    const double s = 1 / mle;
    double score = 0;
    for (int i = 0; i < n; ++i) score += std::log(s) + 1 - boost::math::digamma(s) + std::log(yg[i] / fg.mu[i]) - yg[i] / fg.mu[i];
    CHECK(std::fabs(score) < 1e-6 * n);
}

TEST_CASE("E[D]/tau is close to n - p for the normal") {
    std::mt19937_64 rng(6);
    const int n = 30, reps = 400;
    const double tau = 2.0;
    std::vector<double> x(n);
    for (int i = 0; i < n; ++i) x[i] = i;
    const auto X = design(x);
    const auto m = linear_model(normal_family(), identity_link(), 2);
    double acc = 0;
    for (int r = 0; r < reps; ++r) {
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i) y[i] = 1 + 0.1 * x[i] + std::normal_distribution<double>(0, std::sqrt(tau))(rng);
        acc += fit(m, X, y).deviance / tau;
    }
    CHECK_THAT(acc / reps, WithinRel(n - 2.0, 0.05));
}

TEST_CASE("nonlinear predictor") {
    // mu = exp(a) * x^c
    const auto pr = expression_predictor("a + c*log(x)", {"x"}, {"a", "c"});
    std::mt19937_64 rng(12);
    const int n = 80;
    Eigen::MatrixXd X(n, 1);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = 0.5 + 0.05 * i;
        y[i] = std::poisson_distribution<int>(std::exp(0.4) * std::pow(X(i, 0), 1.2))(rng);
    }
    const RegressionModel m{poisson_family(), log_link(), pr};
    const auto r = fit(m, X, y, Eigen::Vector2d(0, 0));
    CHECK(r.converged);
    // same model as a linear predictor in log x
    Eigen::MatrixXd L(n, 2);
    L.col(0).setOnes();
    L.col(1) = X.col(0).array().log();
    const auto lin = fit(linear_model(poisson_family(), log_link(), 2), L, y);
    CHECK((r.beta - lin.beta).cwiseAbs().maxCoeff() < 1e-6);
    CHECK_THROWS_AS(fit(m, X, y), domain_error);  // no start value
}

TEST_CASE("bad inputs") {
    const auto m = linear_model(poisson_family(), log_link(), 2);
    Eigen::MatrixXd X(4, 2);
    X << 1, 1, 1, 1, 1, 1, 1, 1;
    const Eigen::VectorXd y = (Eigen::VectorXd(4) << 1, 2, 3, 4).finished();
    CHECK_THROWS_AS(fit(m, X, y), domain_error);  // rank deficient
    X << 1, 0, 1, 1, 1, 2, 1, 3;
    CHECK_THROWS_AS(fit(m, X, (Eigen::VectorXd(4) << 1, -2, 3, 4).finished()), domain_error);
    CHECK_THROWS_AS(fit(m, X, (Eigen::VectorXd(4) << 1, 2.5, 3, 4).finished()), domain_error);
    CHECK_THROWS_AS(fit(m, X, (Eigen::VectorXd(3) << 1, 2, 3).finished()), domain_error);
}
