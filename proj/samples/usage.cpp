// Walks through the main entry points on small inputs.
#include <cstdio>

#include "dispersion/dispersion.hpp"

using namespace dispersion;

int main() {
    // unit deviances and their variance functions
    const UnitDeviance g = gamma_deviance();
    std::printf("gamma d(2; 1) = %.12g, V(2) = %.12g\n", eval_deviance(g, 2, 1), unit_variance(g, 2));

    // exact density vs saddlepoint for gamma
    const EdmFamily gam = gamma_family();
    const double theta = inverse_mean(gam, 1.5);
    for (double tau : {1.0, 0.1, 0.01}) {
        const double exact = density(gam, 1.2, theta, tau).value;
        const double sp = saddlepoint_density(gam, 1.2, theta, tau).value;
        std::printf("tau=%-5g exact %.8g  saddlepoint %.8g  ratio %.6f\n", tau, exact, sp, sp / exact);
    }

    // Lugannani-Rice tail for the mean of 20 gamma draws
    std::printf("P(mean <= 1.2) ~ %.8f\n", sample_mean_cdf(gam, 1.2, -1.0, 1.0, 20));

    // Tweedie compound Poisson-gamma
    std::printf("tweedie p=1.5: P(Y=0) = %.8f, f(0.5) = %.8f\n", tweedie_zero_mass(1.5, 1, 1),
                tweedie_density(1.5, 0.5, 1, 1));

    // proper dispersion model normalizer
    const PdmSpec vm = von_mises_pdm();
    std::printf("von Mises a0(0.5) = %.12g\n", pdm_normalizer(vm, 0.5));

    // Poisson log-linear regression
    Eigen::MatrixXd X(6, 2);
    Eigen::VectorXd y(6);
    X << 1, 0, 1, 1, 1, 2, 1, 3, 1, 4, 1, 5;
    y << 1, 2, 2, 5, 7, 12;
    const RegressionModel m{poisson_family(), log_link(), linear_predictor(2)};
    auto fr = fit(m, X, y);
    attach_dispersion(fr, 1.0, "fixed");
    std::printf("poisson fit: beta = (%.6f, %.6f), se = (%.6f, %.6f), deviance %.6f in %d iterations\n", fr.beta[0],
                fr.beta[1], fr.se[0], fr.se[1], fr.deviance, fr.iterations);
    return 0;
}
