#pragma once

#include <cstddef>
#include <vector>

namespace fcomb {

/// Normalized exponential discount weights p_1..p_L for a window of length L.
/// p_t is proportional to exp(-lambda * (L - t)), so the most recent row weighs most.
struct DiscountSchedule {
    double lambda = 0.0;
    std::vector<double> weights;

    [[nodiscard]] std::size_t length() const { return weights.size(); }
    [[nodiscard]] double operator[](std::size_t i) const { return weights[i]; }
};

/// Throws DomainError for lambda < 0 (or non-finite) and L == 0.
DiscountSchedule make_schedule(double lambda, std::size_t L);

}  // namespace fcomb
