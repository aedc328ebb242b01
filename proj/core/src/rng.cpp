#include "tlora/rng.hpp"

#include <stdexcept>

namespace tlora {

Matrix random_gaussian(std::size_t n, std::size_t m, double variance, std::uint64_t seed) {
    if (n < 1 || m < 1) throw std::invalid_argument("random_gaussian: dimensions must be >= 1");
    if (!(variance > 0.0)) throw std::invalid_argument("random_gaussian: variance must be > 0");
    Rng rng(seed);
    const double sd = std::sqrt(variance);
    Matrix out(n, m);
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = sd * rng.gaussian();
    return out;
}

}  // namespace tlora
