///
/// \file measurement.hpp
///
/// Column-wise Gaussian measurement batches `y_k = |A_kᵀ x*_k|`.
///
#pragma once

#include "core.hpp"
#include "random.hpp"

#include <utility>
#include <vector>

namespace lrpr
{

enum class ObservationKind
{
    magnitude,  // y = |Aᵀx|
    linear,     // y = Aᵀx (sign known)
};

///
/// Design matrices `A_k` (n x m) and observations `y_k` (length m) for a
/// contiguous block of columns starting at global index `column_offset`.
///
class MeasurementBatch
{
public:
    MeasurementBatch() = default;

    MeasurementBatch(std::vector<Matrix> designs, std::vector<Vector> obs,
                     Index column_offset = 0,
                     ObservationKind kind = ObservationKind::magnitude)
        : m_designs(std::move(designs)),
          m_obs(std::move(obs)),
          m_offset(column_offset),
          m_kind(kind)
    {
        if (m_designs.size() != m_obs.size())
        {
            throw DimensionMismatch("MeasurementBatch: designs/obs count mismatch");
        }
        if (m_designs.empty())
        {
            return;
        }
        m_n = m_designs.front().rows();
        m_m = m_designs.front().cols();
        for (std::size_t k = 0; k < m_designs.size(); ++k)
        {
            if (m_designs[k].rows() != m_n || m_designs[k].cols() != m_m ||
                m_obs[k].size() != m_m)
            {
                throw DimensionMismatch("MeasurementBatch: inconsistent column " +
                                        std::to_string(k));
            }
            if (kind == ObservationKind::magnitude && (m_obs[k].array() < 0.0).any())
            {
                throw Error("MeasurementBatch: negative magnitude observation");
            }
        }
    }

    Index n() const noexcept { return m_n; }
    Index m() const noexcept { return m_m; }
    Index q() const noexcept { return static_cast<Index>(m_designs.size()); }
    Index column_offset() const noexcept { return m_offset; }
    ObservationKind kind() const noexcept { return m_kind; }

    const Matrix& design(Index k) const { return m_designs[static_cast<std::size_t>(k)]; }
    const Vector& obs(Index k) const { return m_obs[static_cast<std::size_t>(k)]; }

    /// Mean squared observation `(1/mq) Σ y²`.
    double mean_energy() const
    {
        double acc = 0.0;
        for (const auto& y : m_obs)
        {
            acc += y.squaredNorm();
        }
        return acc / static_cast<double>(m_m * q());
    }

    /// Restrict every column to the measurement index range `[begin, begin+len)`.
    MeasurementBatch slice_measurements(Index begin, Index len) const
    {
        std::vector<Matrix> d;
        std::vector<Vector> o;
        d.reserve(m_designs.size());
        o.reserve(m_obs.size());
        for (std::size_t k = 0; k < m_designs.size(); ++k)
        {
            d.emplace_back(m_designs[k].middleCols(begin, len));
            o.emplace_back(m_obs[k].segment(begin, len));
        }
        return MeasurementBatch(std::move(d), std::move(o), m_offset, m_kind);
    }

    /// Columns `[begin, begin+count)` as a new batch.
    MeasurementBatch slice_columns(Index begin, Index count) const
    {
        std::vector<Matrix> d(m_designs.begin() + begin, m_designs.begin() + begin + count);
        std::vector<Vector> o(m_obs.begin() + begin, m_obs.begin() + begin + count);
        return MeasurementBatch(std::move(d), std::move(o), m_offset + begin, m_kind);
    }

    /// Same designs with every observation negated (linear batches only).
    MeasurementBatch negated() const
    {
        if (m_kind != ObservationKind::linear)
        {
            throw Error("MeasurementBatch::negated requires linear observations");
        }
        std::vector<Vector> o;
        o.reserve(m_obs.size());
        for (const auto& y : m_obs)
        {
            o.emplace_back(-y);
        }
        return MeasurementBatch(m_designs, std::move(o), m_offset, m_kind);
    }

private:
    std::vector<Matrix> m_designs;
    std::vector<Vector> m_obs;
    Index m_n      = 0;
    Index m_m      = 0;
    Index m_offset = 0;
    ObservationKind m_kind = ObservationKind::magnitude;
};

/// Design matrix of global column `column` drawn from its own stream.
inline Matrix gaussian_design(Index n, Index m, std::uint64_t seed, Index column)
{
    GaussianStream rng(tagged_seed(seed, StreamTag::design),
                       static_cast<std::uint64_t>(column));
    return rng.matrix(n, m);
}

namespace detail
{
inline MeasurementBatch measure(const Matrix& xstar, Index m, std::uint64_t seed,
                                Index column_offset, ObservationKind kind)
{
    if (m < 1)
    {
        throw Error("gen_measurements: m must be >= 1");
    }
    require_finite(xstar, "gen_measurements");
    const Index q = xstar.cols();
    std::vector<Matrix> designs;
    std::vector<Vector> obs;
    designs.reserve(static_cast<std::size_t>(q));
    obs.reserve(static_cast<std::size_t>(q));
    for (Index k = 0; k < q; ++k)
    {
        Matrix a = gaussian_design(xstar.rows(), m, seed, column_offset + k);
        Vector y = a.transpose() * xstar.col(k);
        if (kind == ObservationKind::magnitude)
        {
            y = y.cwiseAbs();
        }
        designs.push_back(std::move(a));
        obs.push_back(std::move(y));
    }
    return MeasurementBatch(std::move(designs), std::move(obs), column_offset, kind);
}
}  // namespace detail

/// Phaseless measurements with fresh i.i.d. N(0,1) designs per column.
inline MeasurementBatch gen_measurements(const Matrix& xstar, Index m, std::uint64_t seed,
                                         Index column_offset = 0)
{
    return detail::measure(xstar, m, seed, column_offset, ObservationKind::magnitude);
}

/// Signed (phase-known) measurements `y_k = A_kᵀ x*_k`.
inline MeasurementBatch gen_linear_measurements(const Matrix& xstar, Index m,
                                                std::uint64_t seed, Index column_offset = 0)
{
    return detail::measure(xstar, m, seed, column_offset, ObservationKind::linear);
}

}  // namespace lrpr
