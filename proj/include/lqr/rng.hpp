#pragma once

#include <cstdint>
#include <random>

#include "lqr/types.hpp"

namespace lqr {

// Stream tags for substream derivation. Each replicate derives one stream
// per tag so the noise, perturbation and baseline-randomization sequences
// never share state.
enum class StreamTag : std::uint64_t {
    noise_w = 1,
    perturb_v = 2,
    baseline = 3,
    bootstrap = 4,
    aux = 5,
};

std::uint64_t splitmix64(std::uint64_t& state);

/// Derives a stream seed from (seed, tag) by two rounds of splitmix64 mixing.
std::uint64_t derive_seed(std::uint64_t seed, StreamTag tag);

/// Replicate seed per the base_seed xor replicate_id contract.
inline std::uint64_t replicate_seed(std::uint64_t base_seed, std::uint64_t replicate) {
    return base_seed ^ replicate;
}

// Deterministic random stream. Gaussian draws use Box-Muller on uniforms
// built directly from the engine output, so the byte sequence does not
// depend on the standard library's distribution implementations.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in (0, 1).
    double uniform();

    /// Standard normal.
    double gaussian();

    Vector gaussian_vector(int dim);

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace lqr
