#include "fcomb/discount.hpp"

#include "fcomb/errors.hpp"

#include <cmath>
#include <string>

namespace fcomb {

DiscountSchedule make_schedule(double lambda, std::size_t L) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw DomainError("discount lambda must be a finite value >= 0");
    }
    if (L == 0) throw DomainError("window length must be positive");

    DiscountSchedule s;
    s.lambda = lambda;
    s.weights.resize(L);
    if (lambda == 0.0) {
        s.weights.assign(L, 1.0 / static_cast<double>(L));
        return s;
    }
    // Exponents are relative to the newest row (exponent 0), so the largest
    // term is exactly 1 and nothing overflows; tiny early weights may underflow
    // to 0 only when they are genuinely below double range.
    double total = 0.0;
    for (std::size_t t = 0; t < L; ++t) {
        const double age = static_cast<double>(L - 1 - t);
        s.weights[t] = std::exp(-lambda * age);
        total += s.weights[t];
    }
    for (double& w : s.weights) w /= total;
    return s;
}

}  // namespace fcomb
