#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace harfuse {

// All numeric state is 64-bit; storage is a flat Eigen array indexed
// row-major by an explicit shape vector.
using Scalar = double;
using Index = Eigen::Index;
using Array = Eigen::ArrayXd;
using Shape = std::vector<Index>;

using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape or rank incompatible with the requested operation.
struct DimensionError : Error {
    using Error::Error;
};

// Input data violates a documented precondition (bad rows, unnormalized
// probabilities, non-one-hot labels, ...).
struct ValidationError : Error {
    using Error::Error;
};

// Bad or inconsistent configuration.
struct ConfigError : Error {
    using Error::Error;
};

// Operation invoked in the wrong state (apply before fit, predict on a
// train-mode net, missing grad, missing artifact, ...).
struct StateError : Error {
    using Error::Error;
};

// Malformed or missing input data.
struct DataError : Error {
    using Error::Error;
};

// Streams cannot be aligned (no overlapping time range, mismatched counts).
struct SyncError : Error {
    using Error::Error;
};

// Loss became non-finite during training.
struct TrainingDivergence : Error {
    using Error::Error;
};

inline Index numel(const Shape& shape) {
    Index n = 1;
    for (Index d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// splitmix64; used to derive independent sub-seeds from one master seed.
inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic uniform integer in [0, bound) by rejection sampling.
// std::uniform_int_distribution is implementation-defined, so shuffles
// built on this stay reproducible across standard libraries.
template <typename Rng>
std::uint64_t uniform_below(Rng& rng, std::uint64_t bound) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % bound;
}

// Uniform double in [0,1). <random> distributions are implementation-defined;
// this mapping (and the mt19937_64 engine itself) is pinned by the standard.
template <typename Rng>
Scalar uniform01(Rng& rng) {
    return static_cast<Scalar>(rng() >> 11) * 0x1.0p-53;
}

template <typename Rng>
Scalar uniform_range(Rng& rng, Scalar lo, Scalar hi) {
    return lo + (hi - lo) * uniform01(rng);
}

template <typename T, typename Rng>
void shuffle_inplace(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(uniform_below(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace harfuse
