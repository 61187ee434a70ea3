#include "lqr/rng.hpp"

#include <cmath>
#include <numbers>

namespace lqr {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, StreamTag tag) {
    std::uint64_t s = seed ^ (static_cast<std::uint64_t>(tag) * 0xd1342543de82ef95ULL);
    std::uint64_t a = splitmix64(s);
    std::uint64_t b = splitmix64(s);
    return a ^ (b << 1);
}

double RngStream::uniform() {
    // 53-bit mantissa in (0, 1); zero is excluded so log() is always safe.
    for (;;) {
        double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
        if (u > 0.0) return u;
    }
}

double RngStream::gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

Vector RngStream::gaussian_vector(int dim) {
    Vector v(dim);
    for (int i = 0; i < dim; ++i) v(i) = gaussian();
    return v;
}

}  // namespace lqr
