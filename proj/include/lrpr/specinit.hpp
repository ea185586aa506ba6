///
/// \file specinit.hpp
///
/// Truncated spectral initialization of the column span and rank estimation.
///
#pragma once

#include "core.hpp"
#include "measurement.hpp"

#include <limits>
#include <utility>

namespace lrpr
{

enum class ThresholdMode
{
    global,      // y²_ik ≤ c_y · (1/mq) Σ_ik y²_ik
    per_column,  // y²_ik ≤ c_y · (1/m) Σ_i y²_ik
};

///
/// `Y_U = (1/mq) Σ_ik y²_ik a_ik a_ikᵀ 1{y²_ik ≤ threshold}`.
///
struct YuMatrix
{
    Matrix mat;
    ThresholdMode mode  = ThresholdMode::global;
    double c_y          = 9.0;
    double total_energy = 0.0;  // (1/mq) Σ y²
    Index kept          = 0;    // measurements surviving truncation
    Index total         = 0;
};

namespace detail
{
///
/// `(1/mq) Σ_k G_k G_kᵀ` with `G_k = A_k diag(w_k)`, where `weights(k, w)`
/// fills the per-measurement weights. Column blocks are stacked so the
/// rank update runs as one level-3 product; accumulation order is fixed.
///
template <typename WeightFn>
Matrix weighted_gram(const MeasurementBatch& batch, WeightFn&& weights, Index* kept = nullptr)
{
    const Index n = batch.n();
    const Index m = batch.m();
    const Index q = batch.q();
    const Index chunk = std::max<Index>(1, 4096 / std::max<Index>(1, m));
    Matrix acc = Matrix::Zero(n, n);
    Matrix g(n, chunk * m);
    Vector w(m);
    Index nkept = 0;
    for (Index k0 = 0; k0 < q; k0 += chunk)
    {
        const Index cnt = std::min(chunk, q - k0);
        for (Index c = 0; c < cnt; ++c)
        {
            weights(k0 + c, w);
            nkept += (w.array() != 0.0).count();
            g.middleCols(c * m, m).noalias() = batch.design(k0 + c) * w.asDiagonal();
        }
        acc.selfadjointView<Eigen::Lower>().rankUpdate(g.leftCols(cnt * m));
    }
    acc = acc.selfadjointView<Eigen::Lower>();
    acc /= static_cast<double>(m * q);
    if (kept)
    {
        *kept = nkept;
    }
    return acc;
}
}  // namespace detail

inline YuMatrix build_yu(const MeasurementBatch& batch, double c_y = 9.0,
                         ThresholdMode mode = ThresholdMode::global)
{
    if (!(c_y > 0.0))
    {
        throw Error("build_yu: c_y must be positive");
    }
    if (batch.q() == 0 || batch.m() == 0)
    {
        throw Error("build_yu: empty batch");
    }
    YuMatrix yu;
    yu.mode         = mode;
    yu.c_y          = c_y;
    yu.total_energy = batch.mean_energy();
    yu.total        = batch.m() * batch.q();
    const double global_thr = c_y * yu.total_energy;
    const double inv_m      = 1.0 / static_cast<double>(batch.m());

    yu.mat = detail::weighted_gram(
        batch,
        [&](Index k, Vector& w) {
            const Vector& y = batch.obs(k);
            const double thr =
                mode == ThresholdMode::global ? global_thr : c_y * y.squaredNorm() * inv_m;
            for (Index i = 0; i < y.size(); ++i)
            {
                const double y2 = y(i) * y(i);
                w(i)            = y2 <= thr ? std::abs(y(i)) : 0.0;
            }
        },
        &yu.kept);
    if (yu.kept == 0 || yu.mat.isZero(0.0))
    {
        throw DegenerateData("build_yu: every measurement was truncated away");
    }
    return yu;
}

///
/// Fixed-threshold truncated sums bracketing `Y_U`: the indicator becomes
/// `y²_ik ≤ 9 μ² κ² (1 ∓ ε₁) ‖X*‖²_F / q`.
///
inline std::pair<Matrix, Matrix> build_sandwich(const MeasurementBatch& batch,
                                                const GroundTruth& gt, double eps1)
{
    const double base = 9.0 * gt.mu * gt.mu * gt.kappa * gt.kappa * gt.xstar.squaredNorm() /
                        static_cast<double>(gt.q());
    auto make = [&](double thr) {
        return detail::weighted_gram(batch, [&](Index k, Vector& w) {
            const Vector& y = batch.obs(k);
            for (Index i = 0; i < y.size(); ++i)
            {
                w(i) = y(i) * y(i) <= thr ? std::abs(y(i)) : 0.0;
            }
        });
    };
    return {make(base * (1.0 - eps1)), make(base * (1.0 + eps1))};
}

inline SymmetricSpectrum yu_spectrum(const YuMatrix& yu, bool with_vectors = true)
{
    return symmetric_spectrum(yu.mat, with_vectors);
}

/// Largest (1-based) j with `λ_j − λ_n ≥ ω`; 0 when no index qualifies.
inline Index estimate_rank_threshold(const Vector& eig_desc, double omega)
{
    if (!(omega > 0.0))
    {
        throw Error("estimate_rank_threshold: omega must be positive");
    }
    const Index n     = eig_desc.size();
    const double low  = eig_desc(n - 1);
    for (Index j = n; j >= 1; --j)
    {
        if (eig_desc(j - 1) - low >= omega)
        {
            return j;
        }
    }
    return 0;
}

inline Index estimate_rank_threshold(const YuMatrix& yu, double omega)
{
    return estimate_rank_threshold(yu_spectrum(yu, false).values, omega);
}

/// `argmax_j (σ_j − σ_{j+1})` over j in [1, n−1], smallest j on ties.
inline Index estimate_rank_gap(const Vector& eig_desc)
{
    const Index n = eig_desc.size();
    if (n < 2)
    {
        throw Error("estimate_rank_gap: need n >= 2");
    }
    Vector sv = eig_desc.cwiseAbs();
    std::sort(sv.data(), sv.data() + n, std::greater<>());
    Index best     = 1;
    double best_gap = sv(0) - sv(1);
    for (Index j = 2; j < n; ++j)
    {
        const double gap = sv(j - 1) - sv(j);
        if (gap > best_gap)
        {
            best_gap = gap;
            best     = j;
        }
    }
    return best;
}

inline Index estimate_rank_gap(const YuMatrix& yu)
{
    return estimate_rank_gap(yu_spectrum(yu, false).values);
}

/// Top-r eigenvectors, each with its largest-magnitude entry positive.
inline BasisMatrix init_subspace(const SymmetricSpectrum& spec, Index r)
{
    if (r < 1 || r > spec.vectors.rows())
    {
        throw Error("init_subspace: rank out of range");
    }
    Matrix v = spec.vectors.leftCols(r);
    canonicalize_signs(v);
    // Eigenvectors from the solver are orthonormal to working precision;
    // a final QR pass keeps the basis invariant tight.
    return orthonormalize(v).q;
}

inline BasisMatrix init_subspace(const YuMatrix& yu, Index r)
{
    return init_subspace(yu_spectrum(yu), r);
}

}  // namespace lrpr
