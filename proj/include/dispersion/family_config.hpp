#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "dispersion/edm.hpp"
#include "dispersion/expression.hpp"

namespace dispersion {

namespace detail {

inline double json_bound(const nlohmann::json& v) {
    if (v.is_null()) throw domain_error("family config: null interval bound");
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "inf" || s == "+inf") return inf;
        if (s == "-inf") return -inf;
    }
    throw domain_error("family config: interval bounds must be numbers, \"inf\" or \"-inf\"");
}

// [lo, hi] (open) or {"lo":..,"hi":..,"lo_closed":..,"hi_closed":..}
inline Interval json_interval(const nlohmann::json& v) {
    if (v.is_array() && v.size() == 2) return Interval::open(json_bound(v[0]), json_bound(v[1]));
    if (v.is_object()) {
        Interval iv{json_bound(v.at("lo")), json_bound(v.at("hi")), v.value("lo_closed", false), v.value("hi_closed", false)};
        return iv;
    }
    throw domain_error("family config: malformed interval");
}

inline std::function<double(double)> unary_expr(const nlohmann::json& cfg, const char* key, const char* var) {
    if (!cfg.contains(key)) return {};
    auto ex = Expression::parse(cfg.at(key).get<std::string>(), {var});
    return [ex](double x) { return ex(x); };
}

}  // namespace detail

/// Builds an EDM from a JSON description. Required: "name", "cumulant" (an
/// expression in theta), "theta_domain", "mean_domain". Optional: "support"
/// (defaults to the mean domain), "lattice", "unit_dispersion",
/// "theta_start", and analytic shortcuts "mean" (in theta), "inverse_mean"
/// and "variance" (in mu).
inline EdmFamily family_from_json(const nlohmann::json& cfg) {
    EdmFamily f;
    try {
        f.name = cfg.at("name").get<std::string>();
        auto b = Expression::parse(cfg.at("cumulant").get<std::string>(), {"theta"});
        f.b = [b](double t) { return b(t); };
        f.theta_domain = detail::json_interval(cfg.at("theta_domain"));
        f.mean_domain = detail::json_interval(cfg.at("mean_domain"));
        f.support = cfg.contains("support") ? detail::json_interval(cfg.at("support")) : f.mean_domain;
        f.lattice = cfg.value("lattice", false);
        f.unit_dispersion = cfg.value("unit_dispersion", false);
        f.b1 = detail::unary_expr(cfg, "mean", "theta");
        f.q = detail::unary_expr(cfg, "inverse_mean", "mu");
        f.V = detail::unary_expr(cfg, "variance", "mu");
        if (cfg.contains("theta_start")) {
            f.theta_start = cfg.at("theta_start").get<double>();
        } else {
            const Interval& iv = f.theta_domain;
            if (iv.bounded()) f.theta_start = 0.5 * (iv.lo + iv.hi);
            else if (std::isfinite(iv.hi)) f.theta_start = iv.hi - 1;
            else if (std::isfinite(iv.lo)) f.theta_start = iv.lo + 1;
        }
    } catch (const nlohmann::json::exception& e) {
        throw domain_error(std::string("family config: ") + e.what());
    }
    if (!f.theta_domain.interior().contains(f.theta_start)) throw domain_error("family config: theta_start outside theta_domain");
    if (!std::isfinite(f.b(f.theta_start))) throw domain_error("family config: cumulant not finite at theta_start");
    return f;
}

inline EdmFamily family_from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw domain_error("cannot open family config '" + path + "'");
    nlohmann::json cfg;
    try {
        in >> cfg;
    } catch (const nlohmann::json::exception& e) {
        throw domain_error("family config '" + path + "': " + e.what());
    }
    return family_from_json(cfg);
}

}  // namespace dispersion
