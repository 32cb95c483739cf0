#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dispersion/dispersion.hpp"

namespace dispersion::cli {

inline std::string num(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// JSON with every number printed to 17 significant digits (non-finite as null).
class Json {
public:
    Json& field(const std::string& key, double v) { return raw(key, std::isfinite(v) ? num(v) : "null"); }
    Json& field(const std::string& key, bool v) { return raw(key, v ? "true" : "false"); }
    Json& field(const std::string& key, int v) { return raw(key, std::to_string(v)); }
    Json& field(const std::string& key, std::size_t v) { return raw(key, std::to_string(v)); }
    Json& field(const std::string& key, const std::string& v) { return raw(key, quote(v)); }
    Json& field(const std::string& key, const char* v) { return raw(key, quote(v)); }
    Json& field(const std::string& key, const std::vector<double>& v) {
        std::string s = "[";
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + (std::isfinite(v[i]) ? num(v[i]) : "null");
        return raw(key, s + "]");
    }
    Json& field(const std::string& key, const std::vector<std::string>& v) {
        std::string s = "[";
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + quote(v[i]);
        return raw(key, s + "]");
    }
    Json& field(const std::string& key, const std::vector<Json>& v) {
        std::string s = "[";
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + v[i].str();
        return raw(key, s + "]");
    }
    Json& field(const std::string& key, const Json& v) { return raw(key, v.str()); }
    Json& null_field(const std::string& key) { return raw(key, "null"); }

    std::string str() const {
        std::string s = "{";
        for (std::size_t i = 0; i < items_.size(); ++i) s += (i ? ", " : "") + items_[i];
        return s + "}";
    }

private:
    Json& raw(const std::string& key, const std::string& v) {
        items_.push_back(quote(key) + ": " + v);
        return *this;
    }
    static std::string quote(const std::string& s) {
        std::string out = "\"";
        for (char c : s) {
            if (c == '"' || c == '\\') {
                out += '\\';
                out += c;
            } else if (static_cast<unsigned char>(c) < 0x20) {
                char buf[8];
                std::snprintf(buf, sizeof buf, "\\u%04x", c);
                out += buf;
            } else {
                out += c;
            }
        }
        return out + "\"";
    }
    std::vector<std::string> items_;
};

struct FamilyFlags {
    std::string family;
    std::string config;
    double power = std::numeric_limits<double>::quiet_NaN();
};

inline void add_family_flags(CLI::App* sub, FamilyFlags& f) {
    sub->add_option("--family", f.family,
                    "family name (normal, gamma, inverse_gaussian, poisson, binomial, "
                    "negative_binomial, gsh, tweedie)");
    sub->add_option("--config", f.config, "JSON file declaring a family by its cumulant generator");
    sub->add_option("--power", f.power, "Tweedie power p (with --family tweedie)");
}

inline EdmFamily resolve_family(const FamilyFlags& f) {
    if (!f.config.empty()) return family_from_file(f.config);
    if (f.family.empty()) throw domain_error("--family or --config is required");
    if (f.family == "tweedie") {
        if (std::isnan(f.power)) throw domain_error("--family tweedie needs --power");
        return tweedie_family(f.power);
    }
    return family_by_name(f.family);
}

struct MeanFlags {
    std::optional<double> theta, mu;
};

inline void add_mean_flags(CLI::App* sub, MeanFlags& m) {
    auto* t = sub->add_option("--theta", m.theta, "canonical parameter");
    auto* u = sub->add_option("--mu", m.mu, "mean");
    t->excludes(u);
}

inline double resolve_theta(const EdmFamily& f, const MeanFlags& m) {
    if (m.theta) return *m.theta;
    if (m.mu) return inverse_mean(f, *m.mu);
    throw domain_error("one of --theta or --mu is required");
}

inline std::ostream& open_output(const std::string& path, std::ofstream& file, std::ostream& fallback) {
    if (path.empty() || path == "-") return fallback;
    file.open(path);
    if (!file) throw domain_error("cannot write '" + path + "'");
    return file;
}

inline Json saddle_json(const SaddlepointResult& r) {
    Json j;
    j.field("value", r.value).field("saddle", r.saddle);
    if (r.has_residuals) {
        j.field("r", r.r).field("u", r.u);
    } else {
        j.null_field("r").null_field("u");
    }
    return j;
}

// Parses "1, x1 + x2" style formulas: '+'-separated column names; "1" keeps
// and "0" drops the intercept (kept by default).
inline std::vector<std::string> formula_terms(const std::string& formula, bool& intercept) {
    std::vector<std::string> terms;
    intercept = true;
    std::string cur;
    std::istringstream in(formula);
    while (std::getline(in, cur, '+')) {
        const auto t = dispersion::detail::trim(cur);
        if (t.empty()) throw domain_error("empty term in formula '" + formula + "'");
        if (t == "1") continue;
        if (t == "0" || t == "-1") {
            intercept = false;
            continue;
        }
        terms.push_back(t);
    }
    return terms;
}

/// Runs the command line; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Dispersion model numerics: deviances, densities, approximations, fitting."};
    app.require_subcommand(1, 1);
    app.set_help_all_flag("--help-all", "help for every subcommand");

    // deviance
    auto* dev = app.add_subcommand("deviance", "unit deviance d(y; mu)");
    FamilyFlags dev_fam;
    add_family_flags(dev, dev_fam);
    double dev_y = 0, dev_mu = 0;
    dev->add_option("--y", dev_y, "observation")->required();
    dev->add_option("--mu", dev_mu, "mean")->required();

    // density
    auto* den = app.add_subcommand("density", "EDM density (exact, or renormalized saddlepoint if no normalizer)");
    FamilyFlags den_fam;
    add_family_flags(den, den_fam);
    MeanFlags den_mean;
    add_mean_flags(den, den_mean);
    double den_y = 0, den_tau = 1;
    den->add_option("--y", den_y, "observation")->required();
    den->add_option("--tau", den_tau, "dispersion")->capture_default_str();

    // approx
    auto* apx = app.add_subcommand("approx", "saddlepoint and Lugannani-Rice approximations");
    FamilyFlags apx_fam;
    add_family_flags(apx, apx_fam);
    MeanFlags apx_mean;
    add_mean_flags(apx, apx_mean);
    double apx_y = 0, apx_tau = 1;
    long apx_n = 1;
    std::string apx_method = "saddle";
    apx->add_option("--y", apx_y, "observation")->required();
    apx->add_option("--tau", apx_tau, "dispersion")->capture_default_str();
    apx->add_option("--n", apx_n, "sample size (mean-lr)")->capture_default_str();
    apx->add_option("--method", apx_method, "saddle | renorm | lr | mean-lr")
        ->check(CLI::IsMember({"saddle", "renorm", "lr", "mean-lr"}))
        ->capture_default_str();

    // tweedie
    auto* tw = app.add_subcommand("tweedie", "Tweedie density and CDF on a y-grid (CSV)");
    double tw_p = 1.5, tw_mu = 1, tw_tau = 1, tw_from = 0, tw_to = 5, tw_step = 0.5;
    std::string tw_out;
    tw->add_option("--p", tw_p, "power")->required();
    tw->add_option("--mu", tw_mu, "mean")->capture_default_str();
    tw->add_option("--tau", tw_tau, "dispersion")->capture_default_str();
    tw->add_option("--y-from", tw_from, "first y")->capture_default_str();
    tw->add_option("--y-to", tw_to, "last y")->capture_default_str();
    tw->add_option("--y-step", tw_step, "grid step")->capture_default_str();
    tw->add_option("--output", tw_out, "CSV path (default stdout)");

    // pdm
    auto* pdm = app.add_subcommand("pdm", "proper dispersion models");
    std::string pdm_model;
    double pdm_mu = 0, pdm_tau = 1;
    std::optional<double> pdm_y;
    bool pdm_integrate = false, pdm_pivotal = false;
    std::size_t pdm_m = 10000;
    unsigned long long pdm_seed = 0x5EED;
    std::vector<double> pdm_mus;
    pdm->add_option("--model", pdm_model, "vonmises | simplex | normal | gamma | inverse_gaussian")->required();
    pdm->add_option("--mu", pdm_mu, "mean");
    pdm->add_option("--tau", pdm_tau, "dispersion")->capture_default_str();
    auto* py = pdm->add_option("--y", pdm_y, "evaluate the density at y");
    auto* pi = pdm->add_flag("--integrate", pdm_integrate, "normalizer a0(tau) and total mass at mu");
    auto* pp = pdm->add_flag("--pivotal-check", pdm_pivotal, "KS comparison of d(Y, mu) across means");
    py->excludes(pi)->excludes(pp);
    pi->excludes(pp);
    pdm->add_option("--m", pdm_m, "Monte Carlo sample size per mean")->capture_default_str();
    pdm->add_option("--mus", pdm_mus, "means for --pivotal-check (default: 3 interior probes)")->delimiter(',');
    pdm->add_option("--seed", pdm_seed, "RNG seed")->capture_default_str();

    // cf-construct
    auto* cfc = app.add_subcommand("cf-construct", "dispersion model normalizer from a characteristic function");
    std::string cf_name = "gauss", cf_expr, cf_out, cf_report;
    double cf_tau = 0.25, cf_L = 20;
    std::size_t cf_N = 4096;
    std::optional<double> cf_lambda;
    cfc->add_option("--cf", cf_name, "gauss | laplace-cf | triangular-cf | cauchy")->capture_default_str();
    cfc->add_option("--cf-expr", cf_expr, "user characteristic function, expression in t");
    cfc->add_option("--tau", cf_tau, "dispersion")->capture_default_str();
    cfc->add_option("--L", cf_L, "half-width of the grid")->capture_default_str();
    cfc->add_option("--N", cf_N, "grid points (power of two >= 1024)")->capture_default_str();
    cfc->add_option("--lambda-reg", cf_lambda, "Tikhonov weight (default 1e-8 |A|^2)");
    cfc->add_option("--output", cf_out, "CSV path for (y, a) (default stdout)");
    cfc->add_option("--report", cf_report, "JSON report path (default stderr)");

    // fit
    auto* ft = app.add_subcommand("fit", "IRLS fit of an exponential-family (non)linear model");
    FamilyFlags ft_fam;
    add_family_flags(ft, ft_fam);
    std::string ft_data, ft_response, ft_link, ft_formula, ft_expr, ft_tau_method = "mle";
    std::vector<std::string> ft_params;
    std::vector<double> ft_start;
    ft->add_option("--data", ft_data, "CSV with header ('-' for stdin)")->required();
    ft->add_option("--response", ft_response, "response column")->required();
    ft->add_option("--link", ft_link, "identity | log | logit | inverse | sqrt (default canonical)");
    auto* ff = ft->add_option("--formula", ft_formula, "linear terms, e.g. \"x1 + x2\" (\"0 + x\" drops the intercept)");
    auto* fe = ft->add_option("--predictor-expr", ft_expr, "nonlinear predictor in covariates and --params");
    ff->excludes(fe);
    ft->add_option("--params", ft_params, "parameter names for --predictor-expr")->delimiter(',');
    ft->add_option("--start", ft_start, "initial parameter values")->delimiter(',');
    ft->add_option("--tau-method", ft_tau_method, "mle | moment")
        ->check(CLI::IsMember({"mle", "moment"}))
        ->capture_default_str();

    // check
    auto* chk = app.add_subcommand("check", "run invariant suites");
    std::string chk_scope;
    unsigned long long chk_seed = 0x5EED;
    auto* cs = chk->add_option("--scope", chk_scope, "family/deviance/PDM name, tweedie, cf or all");
    auto* cfam = chk->add_option("--family", chk_scope, "same as --scope");
    cs->excludes(cfam);
    chk->add_option("--seed", chk_seed, "RNG seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "ERROR:usage:" << e.what() << "\n";
        err << app.help();
        return 1;
    }

    try {
        if (*dev) {
            double v = 0;
            if (!dev_fam.config.empty() || dev_fam.family == "tweedie") {
                const auto f = resolve_family(dev_fam);
                v = edm_deviance(f, dev_y, dev_mu);
            } else {
                bool found = false;
                for (const auto& n : deviance_names()) found = found || n == dev_fam.family;
                if (dev_fam.family.empty()) throw domain_error("--family is required");
                if (found || dev_fam.family == "von_mises" || dev_fam.family == "ig") {
                    v = eval_deviance(deviance_by_name(dev_fam.family), dev_y, dev_mu);
                } else {
                    v = edm_deviance(family_by_name(dev_fam.family), dev_y, dev_mu);
                }
            }
            out << num(v) << "\n";
        } else if (*den) {
            const auto f = resolve_family(den_fam);
            const auto d = density(f, den_y, resolve_theta(f, den_mean), den_tau);
            out << Json().field("value", d.value).field("approximate", d.approximate).str() << "\n";
        } else if (*apx) {
            const auto f = resolve_family(apx_fam);
            const double theta = resolve_theta(f, apx_mean);
            SaddlepointResult r;
            if (apx_method == "saddle") r = saddlepoint_density(f, apx_y, theta, apx_tau);
            else if (apx_method == "renorm") r = renormalized_saddlepoint(f, apx_y, theta, apx_tau);
            else if (apx_method == "lr") r = lugannani_rice(f, apx_y, theta, apx_tau);
            else r = sample_mean_lugannani_rice(f, apx_y, theta, apx_tau, apx_n);
            out << saddle_json(r).str() << "\n";
        } else if (*tw) {
            if (!(tw_step > 0) || !(tw_to >= tw_from)) throw domain_error("need --y-step > 0 and --y-to >= --y-from");
            std::ofstream file;
            std::ostream& os = open_output(tw_out, file, out);
            os << "y,density,cdf\n";
            const auto count = static_cast<long>(std::floor((tw_to - tw_from) / tw_step + 1e-9));
            for (long i = 0; i <= count; ++i) {
                const double y = tw_from + static_cast<double>(i) * tw_step;
                os << num(y) << "," << num(tweedie_density(tw_p, y, tw_mu, tw_tau)) << ","
                   << num(tweedie_cdf(tw_p, y, tw_mu, tw_tau)) << "\n";
            }
        } else if (*pdm) {
            const PdmSpec p = pdm_by_name(pdm_model);
            if (pdm_pivotal) {
                std::vector<double> mus = pdm_mus;
                if (mus.empty()) {
                    const auto probes = probe_grid(p.deviance.domain, 5);
                    mus.assign(probes.begin() + 1, probes.end() - 1);
                }
                const auto rep = pivotal_check(p, mus, pdm_tau, pdm_m, pdm_seed);
                std::vector<Json> pairs;
                for (const auto& k : rep.pairs) {
                    pairs.push_back(Json()
                                        .field("mu_a", k.mu_a)
                                        .field("mu_b", k.mu_b)
                                        .field("statistic", k.statistic)
                                        .field("p_value", k.p_value));
                }
                out << Json().field("pairs", pairs).field("threshold", rep.threshold).field("passed", rep.passed()).str()
                    << "\n";
            } else if (pdm_integrate) {
                const double a0 = pdm_normalizer(p, pdm_tau);
                const double scale = detail::pdm_scale(p.deviance, pdm_mu, pdm_tau);
                const double mass = integrate_over_support(
                    p.deviance,
                    [&](double y) {
                        if (!p.deviance.circular && !p.deviance.support.interior().contains(y)) return 0.0;
                        return pdm_density(p, y, pdm_mu, pdm_tau);
                    },
                    pdm_mu, scale);
                out << Json().field("normalizer", a0).field("mass", mass).str() << "\n";
            } else if (pdm_y) {
                out << Json().field("value", pdm_density(p, *pdm_y, pdm_mu, pdm_tau)).str() << "\n";
            } else {
                throw domain_error("pdm: one of --y, --integrate, --pivotal-check is required");
            }
        } else if (*cfc) {
            const CfSpec cf = cf_expr.empty() ? cf_by_name(cf_name) : expression_cf(cf_expr);
            const double lambda = cf_lambda ? *cf_lambda : default_lambda(cf, cf_tau, cf_L, cf_N);
            const auto sol = solve_normalizer(cf, cf_tau, cf_L, cf_N, lambda);
            std::ofstream file;
            std::ostream& os = open_output(cf_out, file, out);
            os << "y,a\n";
            for (std::size_t i = 0; i < sol.grid.size(); ++i) os << num(sol.grid[i]) << "," << num(sol.a_values[i]) << "\n";
            std::ofstream rfile;
            std::ostream& rs = open_output(cf_report, rfile, err);
            rs << Json()
                      .field("residual", sol.residual)
                      .field("lambda_reg", sol.lambda_reg)
                      .field("edge_band", sol.edge_band)
                      .field("flags", Json().field("converged", sol.converged).field("ill_posed", sol.ill_posed))
                      .str()
               << "\n";
        } else if (*ft) {
            const auto f = resolve_family(ft_fam);
            CsvTable t;
            if (ft_data == "-") {
                t = read_csv(std::cin);
            } else {
                t = read_csv_file(ft_data);
            }
            const auto& yc = t.column(ft_response);
            const auto n = static_cast<Eigen::Index>(yc.size());
            Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(yc.data(), n);
            RegressionModel m{f, ft_link.empty() ? canonical_link(f) : link_by_name(ft_link), {}};
            Eigen::MatrixXd X;
            std::optional<Eigen::VectorXd> start;
            if (!ft_expr.empty()) {
                if (ft_params.empty()) throw domain_error("--predictor-expr needs --params");
                if (ft_start.size() != ft_params.size()) throw domain_error("--start must give one value per parameter");
                std::vector<std::string> covs;
                for (const auto& h : t.header) {
                    if (h != ft_response) covs.push_back(h);
                }
                m.predictor = expression_predictor(ft_expr, covs, ft_params);
                X.resize(n, static_cast<Eigen::Index>(covs.size()));
                for (std::size_t j = 0; j < covs.size(); ++j) {
                    const auto& c = t.column(covs[j]);
                    for (Eigen::Index i = 0; i < n; ++i) X(i, static_cast<Eigen::Index>(j)) = c[static_cast<std::size_t>(i)];
                }
                start = Eigen::Map<const Eigen::VectorXd>(ft_start.data(), static_cast<Eigen::Index>(ft_start.size()));
            } else {
                bool intercept = true;
                const auto terms = formula_terms(ft_formula.empty() ? "1" : ft_formula, intercept);
                const auto k = static_cast<Eigen::Index>(terms.size() + (intercept ? 1 : 0));
                if (k == 0) throw domain_error("formula has no terms");
                X.resize(n, k);
                Eigen::Index col = 0;
                std::vector<std::string> names;
                if (intercept) {
                    X.col(col++).setOnes();
                    names.push_back("(intercept)");
                }
                for (const auto& term : terms) {
                    const auto& c = t.column(term);
                    for (Eigen::Index i = 0; i < n; ++i) X(i, col) = c[static_cast<std::size_t>(i)];
                    ++col;
                    names.push_back(term);
                }
                m.predictor = linear_predictor(static_cast<std::size_t>(k));
                m.predictor.parameter_names = names;
                if (!ft_start.empty()) {
                    if (static_cast<Eigen::Index>(ft_start.size()) != k) throw domain_error("--start has the wrong length");
                    start = Eigen::Map<const Eigen::VectorXd>(ft_start.data(), k);
                }
            }
            auto res = fit(m, X, y, start);
            double tau = 1.0;
            std::string method = ft_tau_method;
            if (f.unit_dispersion) {
                method = "fixed";
            } else if (ft_tau_method == "mle") {
                tau = estimate_tau_mle(m, res, y);
            } else {
                tau = estimate_tau_moment(m, res, y);
            }
            attach_dispersion(res, tau, method);
            std::vector<double> beta(res.beta.data(), res.beta.data() + res.beta.size());
            std::vector<double> se(res.se.data(), res.se.data() + res.se.size());
            Json j;
            j.field("parameters", m.predictor.parameter_names);
            j.field("beta", beta).field("se", se).field("tau", tau).field("tau_method", method);
            j.field("deviance", res.deviance).field("iterations", res.iterations).field("converged", res.converged);
            out << j.str() << "\n";
        } else if (*chk) {
            if (chk_scope.empty()) throw domain_error("check needs --scope (or --family)");
            const auto rep = run_checks(chk_scope, chk_seed);
            std::size_t failed = 0;
            for (const auto& it : rep.items) {
                out << (it.passed ? "PASS " : "FAIL ") << it.name;
                if (!it.detail.empty()) out << "  [" << it.detail << "]";
                out << "\n";
                if (!it.passed) ++failed;
            }
            out << "summary: " << rep.items.size() - failed << "/" << rep.items.size() << " passed\n";
            if (failed) {
                err << "ERROR:check:" << failed << " properties failed\n";
                return 2;
            }
        }
    } catch (const domain_error& e) {
        err << "ERROR:domain:" << e.what() << "\n";
        return 1;
    } catch (const numerical_error& e) {
        err << "ERROR:numerical:" << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        err << "ERROR:domain:" << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace dispersion::cli
