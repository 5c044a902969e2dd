#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace sbfm {

// Thrown when a numerical state stops being finite mid-integration.
// Carries the step index at which the blow-up was detected.
class divergence_error : public std::runtime_error {
public:
    divergence_error(std::size_t step, const std::string& what)
        : std::runtime_error("divergence at step " + std::to_string(step) + ": " + what),
          step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

// Thrown when a network activation or a gradient stops being finite.
class numeric_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline bool all_finite(const double* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(data[i])) return false;
    return true;
}

}  // namespace sbfm
