#pragma once

#include <string>
#include <vector>

namespace dispersion {

struct PropertyResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct Report {
    std::vector<PropertyResult> items;

    void add(std::string name, bool passed, std::string detail = {}) {
        items.push_back({std::move(name), passed, std::move(detail)});
    }
    bool passed() const {
        for (const auto& it : items) {
            if (!it.passed) return false;
        }
        return true;
    }
    void append(const Report& other, const std::string& prefix = {}) {
        for (const auto& it : other.items) items.push_back({prefix + it.name, it.passed, it.detail});
    }
};

}  // namespace dispersion
