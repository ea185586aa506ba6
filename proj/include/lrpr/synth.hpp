///
/// \file synth.hpp
///
/// Planted ground truths, piecewise-constant subspace sequences and
/// sample-splitting partitions for the synthetic experiments.
///
#pragma once

#include "core.hpp"
#include "measurement.hpp"
#include "random.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cstdint>
#include <vector>

namespace lrpr
{

struct SynthConfig
{
    Index n            = 200;
    Index q            = 400;
    Index r            = 4;
    Index m            = 80;
    std::uint64_t seed = 1;
    bool sample_split  = false;
    Index t_outer      = 30;

    void validate() const
    {
        if (n < 1 || q < 1 || r < 1 || m < 1)
        {
            throw Error("SynthConfig: dimensions must be positive");
        }
        if (r > std::min(n, q))
        {
            throw Error("SynthConfig: r must not exceed min(n, q)");
        }
    }
};

/// Orthonormalized n x r standard Gaussian matrix.
inline BasisMatrix random_basis(Index n, Index r, std::uint64_t seed)
{
    GaussianStream rng(tagged_seed(seed, StreamTag::basis));
    return orthonormalize(rng.matrix(n, r)).q;
}

///
/// `X* = U* B̃*` with `U*` an orthonormalized Gaussian matrix and `B̃*`
/// i.i.d. N(0,1). The returned truth carries the SVD-form factors.
///
inline GroundTruth gen_ground_truth(const SynthConfig& cfg)
{
    cfg.validate();
    const BasisMatrix u0 = random_basis(cfg.n, cfg.r, cfg.seed);
    GaussianStream rng(tagged_seed(cfg.seed, StreamTag::coefficient));
    const Matrix coeffs = rng.matrix(cfg.r, cfg.q);
    return GroundTruth::from_factors(u0.mat(), coeffs);
}

/// Skew-symmetric matrix with i.i.d. N(0,1) strict upper triangle.
inline Matrix random_skew(Index n, std::uint64_t seed)
{
    GaussianStream rng(tagged_seed(seed, StreamTag::skew));
    Matrix m = Matrix::Zero(n, n);
    for (Index j = 1; j < n; ++j)
    {
        for (Index i = 0; i < j; ++i)
        {
            m(i, j) = rng();
            m(j, i) = -m(i, j);
        }
    }
    return m;
}

/// `orthonormalize(expm(−γ M) u)` for a fixed skew-symmetric generator `M`.
inline BasisMatrix rotate_with(const BasisMatrix& u, const Matrix& skew, double gamma)
{
    if (gamma < 0.0)
    {
        throw Error("rotate_subspace: gamma must be >= 0");
    }
    if (gamma == 0.0)
    {
        return u;
    }
    const Matrix rot = (-gamma * skew).exp();
    return orthonormalize(rot * u.mat()).q;
}

inline BasisMatrix rotate_subspace(const BasisMatrix& u, double gamma, std::uint64_t seed)
{
    return rotate_with(u, random_skew(u.rows(), seed), gamma);
}

///
/// Bisection on γ so that `SE(rotate(u, γ), u)` hits `target_se` within 1e-3.
/// The bracket is grown by doubling from a small γ, so the returned value
/// sits below the first local maximum of SE(γ).
///
inline double calibrate_gamma(const BasisMatrix& u, double target_se, std::uint64_t seed)
{
    if (!(target_se > 0.0 && target_se < 1.0))
    {
        throw Error("calibrate_gamma: target must lie in (0, 1)");
    }
    constexpr int kMaxSteps = 200;
    constexpr double kTol   = 1e-3;
    const Matrix skew       = random_skew(u.rows(), seed);
    auto se_at = [&](double g) { return subspace_error(u, rotate_with(u, skew, g)); };

    int steps = 0;
    double lo = 0.0;
    double hi = 1e-5;
    double se_hi = se_at(hi);
    while (se_hi < target_se)
    {
        if (++steps > kMaxSteps)
        {
            throw Error("calibrate_gamma: failed to bracket target");
        }
        lo    = hi;
        hi   *= 2.0;
        se_hi = se_at(hi);
    }
    if (std::abs(se_hi - target_se) <= kTol)
    {
        return hi;
    }
    while (steps++ <= kMaxSteps)
    {
        const double mid = 0.5 * (lo + hi);
        const double se  = se_at(mid);
        if (std::abs(se - target_se) <= kTol)
        {
            return mid;
        }
        (se < target_se ? lo : hi) = mid;
    }
    throw Error("calibrate_gamma: bisection did not converge");
}

//------------------------------------------------------------------------------
// Piecewise-constant subspace sequences
//------------------------------------------------------------------------------

struct ChangeSchedule
{
    Index q_full = 0;
    std::vector<Index> change_times;  // first column of each segment, starts with 0
    std::vector<BasisMatrix> subspaces;
    std::vector<double> gammas;  // gammas[j] generated subspaces[j+1]

    Index segment_of(Index column) const
    {
        Index seg = 0;
        for (std::size_t j = 1; j < change_times.size(); ++j)
        {
            if (column >= change_times[j])
            {
                seg = static_cast<Index>(j);
            }
        }
        return seg;
    }

    const BasisMatrix& basis_at(Index column) const
    {
        return subspaces[static_cast<std::size_t>(segment_of(column))];
    }
};

///
/// Schedule with one segment per entry of `changes` plus the initial one.
/// Each change rotates the previous subspace by `e^{−γM}` with γ calibrated
/// so that the subspace error equals the requested value.
///
inline ChangeSchedule make_change_schedule(Index n, Index r, Index q_full,
                                           const std::vector<Index>& change_times,
                                           const std::vector<double>& target_se,
                                           std::uint64_t seed)
{
    if (change_times.size() != target_se.size())
    {
        throw Error("make_change_schedule: one target SE per change required");
    }
    ChangeSchedule s;
    s.q_full = q_full;
    s.change_times.push_back(0);
    s.subspaces.push_back(random_basis(n, r, seed));
    for (std::size_t j = 0; j < change_times.size(); ++j)
    {
        if (change_times[j] <= s.change_times.back() || change_times[j] >= q_full)
        {
            throw Error("make_change_schedule: change times must increase inside [1, q)");
        }
        const std::uint64_t skew_seed = stream_seed(seed, 1000 + j);
        const double gamma = calibrate_gamma(s.subspaces.back(), target_se[j], skew_seed);
        s.subspaces.push_back(rotate_subspace(s.subspaces.back(), gamma, skew_seed));
        s.gammas.push_back(gamma);
        s.change_times.push_back(change_times[j]);
    }
    return s;
}

/// Columns `[begin, begin+count)` of `X*_full` with i.i.d. N(0,1) coefficients.
inline Matrix stream_columns(const ChangeSchedule& s, Index begin, Index count,
                             std::uint64_t seed)
{
    const Index n = s.subspaces.front().rows();
    const Index r = s.subspaces.front().cols();
    Matrix x(n, count);
    for (Index k = 0; k < count; ++k)
    {
        GaussianStream rng(tagged_seed(seed, StreamTag::coefficient),
                           static_cast<std::uint64_t>(begin + k));
        const Matrix d = rng.matrix(r, 1);
        x.col(k)       = s.basis_at(begin + k).mat() * d;
    }
    return x;
}

/// Phaseless measurements of a mini-batch of the stream.
inline MeasurementBatch stream_batch(const ChangeSchedule& s, Index begin, Index count,
                                     Index m, std::uint64_t seed, Matrix* truth = nullptr)
{
    Matrix x = stream_columns(s, begin, count, seed);
    MeasurementBatch b = gen_measurements(x, m, seed, begin);
    if (truth)
    {
        *truth = std::move(x);
    }
    return b;
}

//------------------------------------------------------------------------------
// Sample splitting
//------------------------------------------------------------------------------

struct IndexRange
{
    Index begin = 0;
    Index size  = 0;
};

struct SamplePartition
{
    IndexRange init;
    std::vector<IndexRange> blocks;  // 2T equal blocks
};

///
/// One initialization set plus `2T` equal disjoint blocks. Blocks have
/// `floor(m_tot / (2T + 1))` entries; the remainder goes to the
/// initialization set.
///
inline SamplePartition split_samples(Index m_tot, Index t_outer)
{
    if (t_outer < 0 || m_tot < 2 * t_outer + 1)
    {
        throw Error("split_samples: need m_tot >= 2T + 1");
    }
    SamplePartition p;
    if (t_outer == 0)
    {
        p.init = {0, m_tot};
        return p;
    }
    const Index block  = m_tot / (2 * t_outer + 1);
    const Index m_init = m_tot - 2 * t_outer * block;
    p.init             = {0, m_init};
    for (Index b = 0; b < 2 * t_outer; ++b)
    {
        p.blocks.push_back({m_init + b * block, block});
    }
    return p;
}

}  // namespace lrpr
