#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace kfdmd {

// SplitMix64 finalizer; used to derive independent substream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Well-known stream tags so that draws for different purposes never collide.
enum class StreamTag : std::uint64_t {
    prior = 1,
    observation_noise = 2,
    state_noise = 3,
    data_noise = 4,
    compression = 5,
    system = 6,
    lemma = 7,
};

// Counter-based substream keyed by (seed, tag, a, b). Two streams with the
// same key produce identical draws regardless of the order they are created.
class Stream {
public:
    Stream(std::uint64_t seed, StreamTag tag, std::uint64_t a = 0, std::uint64_t b = 0)
        : engine_(mix64(mix64(mix64(seed ^ mix64(static_cast<std::uint64_t>(tag))) + a) ^ mix64(b + 0x51ed27ULL))) {}

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }

    Eigen::VectorXd normal_vector(Eigen::Index n) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = normal();
        return v;
    }

    Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols) {
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal();
        return m;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace kfdmd
