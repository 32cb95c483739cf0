#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include <boost/math/special_functions/bessel.hpp>

#include "dispersion/checks.hpp"
#include "dispersion/edm.hpp"
#include "dispersion/family_config.hpp"

using namespace dispersion;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("cgf") {
    CHECK_THAT(cgf(normal_family(), 1, 0, 1), WithinAbs(0.5, 1e-15));
    CHECK_THAT(cgf(gamma_family(), 0.5, -1, 1), WithinRel(std::log(2.0), 1e-14));
    for (const auto& n : family_names()) CHECK(cgf(family_by_name(n), 0, inverse_mean(family_by_name(n), 0.5), 1) == 0);
    CHECK_THROWS_AS(cgf(gamma_family(), 2, -1, 1), domain_error);
}

TEST_CASE("mean value mapping and inverse") {
    CHECK(mean_value(normal_family(), 2) == 2);
    CHECK_THAT(mean_value(gamma_family(), -2), WithinRel(0.5, 1e-15));
    CHECK_THAT(mean_value(inverse_gaussian_family(), -2), WithinRel(0.5, 1e-15));
    CHECK(inverse_mean(normal_family(), 3) == 3);
    CHECK_THAT(inverse_mean(gamma_family(), 0.5), WithinRel(-2.0, 1e-15));
    CHECK_THROWS_AS(mean_value(gamma_family(), 1), domain_error);

    // round trip, also through the numeric inverse of a config family
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-3, -0.1);
    const EdmFamily cfg = family_from_file(SAMPLES_DIR "/gamma_family.json");
    for (int i = 0; i < 50; ++i) {
        const double th = u(rng);
        CHECK_THAT(inverse_mean(gamma_family(), mean_value(gamma_family(), th)), WithinAbs(th, 1e-10));
        const double mu = mean_value(cfg, th);
        CHECK(std::fabs(mean_value(cfg, inverse_mean(cfg, mu)) - mu) <= 1e-10 * std::max(1.0, mu));
    }
}

TEST_CASE("variance functions") {
    CHECK(variance_function(normal_family(), 7) == 1);
    CHECK_THAT(variance_function(gamma_family(), 3), WithinRel(9.0, 1e-15));
    CHECK_THAT(variance_function(poisson_family(), 4), WithinRel(4.0, 1e-15));
    CHECK_THAT(variance_function(gsh_family(), 2), WithinRel(5.0, 1e-15));
    const EdmFamily cfg = family_from_file(SAMPLES_DIR "/gamma_family.json");
    CHECK_THAT(variance_function(cfg, 3), WithinRel(9.0, 1e-8));
}

TEST_CASE("cumulants") {
    CHECK(cumulant(normal_family(), 3, 0.4, 2) == 0);
    CHECK_THAT(cumulant(gamma_family(), 2, -1, 2), WithinRel(2.0, 1e-14));
    CHECK_THAT(cumulant(poisson_family(), 4, 0, 1), WithinRel(1.0, 1e-14));
    // inverse Gaussian kappa_3 = 3 mu^5 tau^2 at theta = -1/2 (mu = 1)
    CHECK_THAT(cumulant(inverse_gaussian_family(), 3, -0.5, 0.5), WithinRel(0.75, 1e-12));
    EdmFamily numeric_only;
    numeric_only.name = "exp-numeric";
    numeric_only.b = [](double t) { return std::exp(t); };
    CHECK_THAT(cumulant(numeric_only, 3, 0.2, 1), WithinRel(std::exp(0.2), 1e-6));
    CHECK_THROWS_AS(cumulant(numeric_only, 7, 0.2, 1), numerical_error);
}

TEST_CASE("edm deviance") {
    CHECK(edm_deviance(normal_family(), 3, 1) == 4);
    CHECK_THAT(edm_deviance(gamma_family(), 2, 1), WithinRel(0.6137056388801094, 1e-14));
    CHECK_THAT(edm_deviance_by_quadrature(gamma_family(), 2, 1), WithinRel(0.6137056388801094, 1e-10));
    CHECK_THAT(edm_deviance_by_quadrature(poisson_family(), 2, 1), WithinRel(0.7725887222397811, 1e-10));
    // closed forms against quadrature on 50 random points
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1, 1);
    for (const auto& n : {"normal", "gamma", "inverse_gaussian", "poisson", "negative_binomial", "gsh"}) {
        const auto f = family_by_name(n);
        for (int i = 0; i < 50; ++i) {
            const double y = f.name == "normal" || f.name == "gsh" ? 3 * u(rng) : std::pow(10, u(rng));
            const double mu = f.name == "normal" || f.name == "gsh" ? 3 * u(rng) : std::pow(10, u(rng));
            const double a = edm_deviance(f, y, mu), b = edm_deviance_by_quadrature(f, y, mu);
            CHECK(std::fabs(a - b) <= 1e-8 * std::max(1.0, a));
        }
    }
}

TEST_CASE("exact densities") {
    CHECK_THAT(density(normal_family(), 0, 0, 1).value, WithinRel(0.3989422804014327, 1e-14));
    CHECK_THAT(density(poisson_family(), 2, 0, 1).value, WithinRel(std::exp(-1.0) / 2, 1e-14));
    CHECK_THAT(density(gamma_family(), 1, -1, 1).value, WithinRel(std::exp(-1.0), 1e-14));
    CHECK_FALSE(density(gamma_family(), 1, -1, 1).approximate);
    CHECK_THROWS_AS(density(poisson_family(), 2.5, 0, 1), domain_error);
    CHECK_THROWS_AS(density(poisson_family(), 2, 0, 2), domain_error);
}

TEST_CASE("config family without normalizer gives an approximate density") {
    const EdmFamily cfg = family_from_file(SAMPLES_DIR "/gamma_family.json");
    const auto d = density(cfg, 1.2, -1, 0.2);
    CHECK(d.approximate);
    // a renormalized saddlepoint for gamma is very close to exact at small tau
    CHECK_THAT(d.value, WithinRel(density(gamma_family(), 1.2, -1, 0.2).value, 5e-3));
}

TEST_CASE("densities integrate to one") {
    for (const auto& n : family_names()) {
        const auto f = family_by_name(n);
        for (double mu : probe_grid(Interval::open(0.2, 0.8), 3)) {
            const double m = f.mean_domain.bounded() ? mu : (f.mean_domain.contains(-1.0) ? 4 * mu - 2 : 5 * mu);
            const double tau = f.unit_dispersion ? 1.0 : 0.3 + mu;
            INFO(n << " mu=" << m << " tau=" << tau);
            CHECK_THAT(edm_total_mass(f, inverse_mean(f, m), tau), WithinAbs(1.0, 1e-6));
        }
    }
}

TEST_CASE("GSH normalizer") {
    // theta = 0, tau = 1: density is sech(pi y / 2)/2
    for (double y : {0.0, 0.7, 3.0}) {
        CHECK_THAT(density(gsh_family(), y, 0, 1).value, WithinRel(0.5 / std::cosh(M_PI * y / 2), 1e-10));
    }
    for (double y : {0.3, 5.0}) {
        for (double tau : {0.2, 1.5}) {
            const double a = gsh_log_normalizer(y, tau);
            const std::size_t j = 2000;
            CHECK(std::fabs(gsh_log_normalizer(y, tau, j) - gsh_log_normalizer(y, tau, 2 * j)) < 1e-10);
            CHECK_THAT(a, WithinAbs(gsh_log_normalizer(y, tau, 2 * j), 1e-10));
        }
    }
}

TEST_CASE("sample mean family") {
    const auto [th, t] = sample_mean_family(gamma_family(), -1, 1, 4);
    CHECK(th == -1);
    CHECK(t == 0.25);
    const auto one = sample_mean_family(gamma_family(), -1, 0.7, 1);
    CHECK(one.second == 0.7);
    CHECK_THROWS_AS(sample_mean_family(binomial_family(), 0, 1, 3), domain_error);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (const auto& f : {gamma_family(), inverse_gaussian_family()}) {
        for (int i = 0; i < 20; ++i) {
            const double t = u(rng);
            const auto p = sample_mean_family(f, -1, 0.8, 5);
            CHECK_THAT(cgf(f, t, p.first, p.second), WithinAbs(5 * cgf(f, t / 5, -1, 0.8), 1e-12));
        }
    }
}

TEST_CASE("Morris classification") {
    CHECK(morris_family({0, 0, 1}).name == "normal");
    CHECK(morris_family({1, 0, 0}).name == "gamma");
    CHECK(morris_family({0, 1, 0}).name == "poisson");
    CHECK(morris_family({-1, 1, 0}).name == "binomial");
    CHECK(morris_family({1, 1, 0}).name == "negative_binomial");
    CHECK(morris_family({1, 0, 1}).name == "gsh");
    CHECK_THROWS_AS(morris_family({2, 0, 0}), domain_error);
    CHECK_THROWS_AS(morris_family({0, 0, 0}), domain_error);
}

TEST_CASE("small-dispersion normality of the standardized cgf") {
    const auto f = gamma_family();
    double err[2];
    int k = 0;
    for (double tau : {1e-2, 1e-4}) {
        double worst = 0;
        for (double t : probe_grid(Interval::closed(-1, 1), 21)) {
            worst = std::max(worst, std::fabs(standardized_cgf(f, t, 1.0, tau) - t * t / 2));
        }
        CHECK(worst <= std::sqrt(tau));
        err[k++] = worst;
    }
    CHECK_THAT(err[0] / err[1], WithinRel(10.0, 0.1));
}

TEST_CASE("family invariant suites") {
    for (const auto& n : family_names()) {
        const Report r = check_family(family_by_name(n));
        for (const auto& it : r.items) {
            INFO(n << ": " << it.name << " " << it.detail);
            CHECK(it.passed);
        }
    }
}

TEST_CASE("family config errors") {
    CHECK_THROWS_AS(family_from_json(nlohmann::json::parse(R"({"name":"x"})")), domain_error);
    CHECK_THROWS_AS(family_from_json(nlohmann::json::parse(
                        R"({"name":"x","cumulant":"log(","theta_domain":[-1,1],"mean_domain":[-1,1]})")),
                    domain_error);
    CHECK_THROWS_AS(family_from_file("/nonexistent.json"), domain_error);
    const auto hs = family_from_file(SAMPLES_DIR "/hyperbolic_secant.json");
    CHECK_THAT(mean_value(hs, 0.3), WithinRel(std::tan(0.3), 1e-8));
    CHECK_THAT(edm_deviance(hs, 1.0, 0.2), WithinRel(edm_deviance(gsh_family(), 1.0, 0.2), 1e-8));
}
