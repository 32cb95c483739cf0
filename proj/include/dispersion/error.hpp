#pragma once

#include <stdexcept>
#include <string>

namespace dispersion {

/// Argument outside the support, parameter domain, or dispersion range.
class domain_error : public std::domain_error {
public:
    explicit domain_error(const std::string& what) : std::domain_error(what) {}
};

/// A numerical routine (quadrature, root solve, series, iteration) failed.
class numerical_error : public std::runtime_error {
public:
    explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dispersion
