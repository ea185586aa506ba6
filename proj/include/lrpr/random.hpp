///
/// \file random.hpp
///
/// Seeded random streams. Every consumer derives its own stream from a
/// (seed, key) pair so generation order and worker count never change output.
///
#pragma once

#include "core.hpp"

#include <cstdint>
#include <random>

namespace lrpr
{

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t key) noexcept
{
    return mix64(mix64(seed) ^ mix64(key + 0x632be59bd9b4e019ULL));
}

/// Domain tags keep streams used for different purposes apart.
enum class StreamTag : std::uint64_t
{
    design      = 1,
    basis       = 2,
    coefficient = 3,
    skew        = 4,
    trial       = 5,
    init        = 6,
    baseline    = 7,
};

constexpr std::uint64_t tagged_seed(std::uint64_t seed, StreamTag tag) noexcept
{
    return stream_seed(seed, static_cast<std::uint64_t>(tag) << 56);
}

class GaussianStream
{
public:
    explicit GaussianStream(std::uint64_t seed) : m_engine(seed) {}

    GaussianStream(std::uint64_t seed, std::uint64_t key) : m_engine(stream_seed(seed, key)) {}

    double operator()() { return m_normal(m_engine); }

    void fill(Eigen::Ref<Matrix> out)
    {
        double* p     = out.data();
        const Index n = out.size();
        if (out.innerStride() == 1 && out.outerStride() == out.rows())
        {
            for (Index i = 0; i < n; ++i)
            {
                p[i] = m_normal(m_engine);
            }
            return;
        }
        for (Index j = 0; j < out.cols(); ++j)
        {
            for (Index i = 0; i < out.rows(); ++i)
            {
                out(i, j) = m_normal(m_engine);
            }
        }
    }

    Matrix matrix(Index rows, Index cols)
    {
        Matrix out(rows, cols);
        fill(out);
        return out;
    }

private:
    std::mt19937_64 m_engine;
    std::normal_distribution<double> m_normal;
};

}  // namespace lrpr
