#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "dispersion/edm.hpp"
#include "dispersion/quadrature.hpp"
#include "dispersion/tweedie.hpp"

using namespace dispersion;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("cumulant generator") {
    CHECK_THAT(tweedie_cumulant_generator(0, 3), WithinRel(4.5, 1e-15));
    CHECK(tweedie_cumulant_generator(2, -1) == 0);
    CHECK_THAT(tweedie_cumulant_generator(3, -2), WithinRel(-2.0, 1e-15));
    CHECK_THAT(tweedie_cumulant_generator(1, 0.5), WithinRel(std::exp(0.5), 1e-15));
    CHECK_THROWS_AS(tweedie_cumulant_generator(0.5, -1), domain_error);
    CHECK_THROWS_AS(tweedie_cumulant_generator(3, 1), domain_error);
}

TEST_CASE("b' reproduces mu and b'' reproduces mu^p") {
    for (double p : {0.0, 1.0, 1.5, 2.0, 2.5, 3.0, -1.0}) {
        for (double mu : {0.4, 1.0, 3.0}) {
            const double th = tweedie_theta(p, mu);
            const auto b = [p](double t) { return tweedie_cumulant_generator(p, t); };
            const double h = 1e-3 * std::min(1.0, std::fabs(th) + 0.1);
            INFO("p=" << p << " mu=" << mu);
            CHECK_THAT(numeric::richardson_derivative(b, th, 1, h), WithinRel(mu, 1e-8));
            CHECK_THAT(numeric::richardson_derivative(b, th, 2, h), WithinRel(std::pow(mu, p), 1e-6));
        }
    }
}

TEST_CASE("deviance") {
    CHECK_THAT(tweedie_deviance(0, 3, 1), WithinRel(4.0, 1e-14));
    CHECK_THAT(tweedie_deviance(2, 2, 1), WithinRel(0.6137056388801094, 1e-12));
    CHECK_THAT(tweedie_deviance(1.5, 0, 1), WithinRel(4.0, 1e-14));
    CHECK_THAT(tweedie_deviance(1, 2, 1), WithinRel(0.7725887222397811, 1e-12));
    // the limit forms join the generic formula smoothly
    CHECK_THAT(tweedie_deviance(2 + 2e-6, 2, 1), WithinRel(tweedie_deviance(2, 2, 1), 1e-5));
    CHECK_THAT(tweedie_deviance(1 + 2e-7, 2, 1), WithinRel(tweedie_deviance(1, 2, 1), 1e-5));
    CHECK_THROWS_AS(tweedie_deviance(0.5, 1, 1), domain_error);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-1, 1);
    for (double p : {0.0, 1.5, 2.0, 3.0}) {
        const auto f = tweedie_family(p);
        for (int i = 0; i < 50; ++i) {
            const double y = std::pow(10, u(rng)), mu = std::pow(10, u(rng));
            CHECK(std::fabs(tweedie_deviance(p, y, mu) - edm_deviance_by_quadrature(f, y, mu)) <=
                  1e-8 * std::max(1.0, tweedie_deviance(p, y, mu)));
        }
    }
}

TEST_CASE("closed-form densities") {
    CHECK_THAT(tweedie_density(0, 0, 0, 1), WithinRel(0.3989422804014327, 1e-14));
    CHECK_THAT(tweedie_density(2, 1, 1, 1), WithinRel(std::exp(-1.0), 1e-14));
    CHECK_THAT(tweedie_density(1, 2, 1, 1), WithinRel(std::exp(-1.0) / 2, 1e-14));
    // inverse Gaussian, mu = 1, tau = 1
    const double y = 0.7;
    CHECK_THAT(tweedie_density(3, y, 1, 1),
               WithinRel(std::exp(-(y - 1) * (y - 1) / (2 * y)) / std::sqrt(2 * M_PI * y * y * y), 1e-12));
    CHECK_THROWS_AS(tweedie_density(-1, 1, 1, 1), domain_error);
    CHECK_THROWS_AS(tweedie_density(0.5, 1, 1, 1), domain_error);
}

TEST_CASE("zero mass") {
    CHECK_THAT(tweedie_zero_mass(1.5, 1, 1), WithinRel(std::exp(-2.0), 1e-14));
    CHECK(tweedie_density(1.5, 0, 1, 1) == tweedie_zero_mass(1.5, 1, 1));
    double prev = 1;
    for (double p : {1.9, 1.99, 1.999}) {
        const double m = tweedie_zero_mass(p, 2, 1);
        CHECK(m < prev);
        prev = m;
    }
    CHECK(tweedie_zero_mass(1.5, 1e4, 1) < 1e-80);
    CHECK_THROWS_AS(tweedie_zero_mass(2.5, 1, 1), domain_error);
}

TEST_CASE("series densities integrate to one") {
    QuadratureOptions opt;
    opt.breakpoints = {0.01, 0.1, 0.5, 1, 2, 5, 10, 30};
    const auto mass = [&](double p, double mu, double tau) {
        const double atom = p < 2 ? tweedie_zero_mass(p, mu, tau) : 0.0;
        return atom + integrate_value([&](double y) { return y > 0 ? tweedie_density(p, y, mu, tau) : 0.0; }, 0, inf, opt);
    };
    CHECK_THAT(mass(1.5, 1, 1), WithinAbs(1.0, 1e-6));
    CHECK_THAT(mass(1.2, 2, 0.5), WithinAbs(1.0, 1e-6));
    CHECK_THAT(mass(2.5, 1, 1), WithinAbs(1.0, 1e-6));
    CHECK_THAT(mass(4.0, 1, 0.5), WithinAbs(1.0, 1e-6));
}

TEST_CASE("series matches closed forms and limits") {
    // p = 3 series route against the inverse Gaussian closed form
    for (double y : {0.2, 1.0, 2.5}) {
        CHECK_THAT(tweedie_density(3 + 1e-9, y, 1.3, 0.6), WithinRel(tweedie_density(3, y, 1.3, 0.6), 1e-6));
    }
    // continuity around p = 2
    const double at2 = tweedie_density(2, 1.3, 1, 0.5);
    CHECK(std::fabs(tweedie_density(2 + 1e-7, 1.3, 1, 0.5) - at2) < 1e-4);
    CHECK(std::fabs(tweedie_density(2 - 1e-7, 1.3, 1, 0.5) - at2) < 1e-4);
    CHECK(std::fabs(tweedie_density(2 + 1e-3, 1.3, 1, 0.5) - at2) < 1e-3);
    CHECK(std::fabs(tweedie_density(2 - 1e-3, 1.3, 1, 0.5) - at2) < 1e-3);
}

TEST_CASE("compound Poisson-gamma Monte Carlo window") {
    // lambda = 2 jumps on average, gamma jumps with shape 1 and mean 0.25
    const double p = 1.5, mu = 1, tau = 1;
    const double lambda = std::pow(mu, 2 - p) / (tau * (2 - p));
    const double shape = (2 - p) / (p - 1);
    const double scale = tau * (p - 1) * std::pow(mu, p - 1);
    std::mt19937_64 rng(0x5EED);
    std::poisson_distribution<int> np(lambda);
    std::gamma_distribution<double> jump(shape, scale);
    const int m = 400000;
    int inside = 0;
    for (int i = 0; i < m; ++i) {
        double s = 0;
        for (int k = np(rng); k > 0; --k) s += jump(rng);
        if (s >= 0.45 && s < 0.55) ++inside;
    }
    const double phat = static_cast<double>(inside) / m;
    const double exact = integrate_value([&](double y) { return tweedie_density(p, y, mu, tau); }, 0.45, 0.55);
    CHECK(std::fabs(phat - exact) < 3 * std::sqrt(exact * (1 - exact) / m));
}

TEST_CASE("cdf") {
    CHECK_THAT(tweedie_cdf(1.5, 0, 1, 1), WithinRel(std::exp(-2.0), 1e-12));
    CHECK_THAT(tweedie_cdf(0, 1.6448536269514722, 0, 1), WithinAbs(0.95, 1e-9));
    CHECK(tweedie_cdf(1.5, 40, 1, 1) > 1 - 1e-8);
    CHECK_THAT(tweedie_cdf(1, 2, 1, 1), WithinRel(2.5 * std::exp(-1.0), 1e-12));
}

TEST_CASE("tweedie family view") {
    const auto f = tweedie_family(1.5);
    CHECK_THAT(variance_function(f, 2), WithinRel(std::pow(2.0, 1.5), 1e-12));
    CHECK_THAT(density(f, 0.5, tweedie_theta(1.5, 1), 1).value, WithinRel(tweedie_density(1.5, 0.5, 1, 1), 1e-10));
    CHECK_THROWS_AS(tweedie_family(0.3), domain_error);
}
