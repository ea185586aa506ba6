///
/// \file altmin.hpp
///
/// Alternating minimization for low-rank phase retrieval (AltMinLowRaP) and
/// its phase-known counterpart (compressive PCA).
///
/// Each outer iteration
///   1. recovers the r-dimensional coefficients b̂_k of every column by
///      phase retrieval against the design `Uᵀ A_k`,
///   2. estimates measurement signs from `x̂_k = U b̂_k`,
///   3. orthonormalizes the rows of B̂,
///   4. refits U by least squares, solved with conjugate gradient on the
///      normal equations without forming the nr x nr system,
///   5. orthonormalizes U.
///
#pragma once

#include "cg.hpp"
#include "core.hpp"
#include "measurement.hpp"
#include "rwf.hpp"
#include "specinit.hpp"
#include "synth.hpp"

#include <chrono>
#include <cmath>
#include <optional>
#include <vector>

namespace lrpr
{

enum class RankMode
{
    fixed,      // supplied rank (or the truth's rank when none is given)
    threshold,  // largest j with λ_j − λ_n ≥ ω
    gap,        // argmax of consecutive eigenvalue gaps
};

struct RankSelection
{
    RankMode mode        = RankMode::fixed;
    Index fixed_rank     = 0;
    std::optional<double> omega;  // explicit ω; otherwise omega_mult · σ²_min / q
    double omega_mult    = 1.3;
};

///
/// Number of RWF iterations at outer iteration t. The linear schedule ramps
/// from `start` to `end`; the logarithmic one follows
/// `C (log r + log κ + t log(0.7) / log(1 − c))`.
///
struct RwfSchedule
{
    enum class Kind
    {
        linear,
        logarithmic,
    };
    Kind kind      = Kind::linear;
    Index start    = 5;
    Index end      = 30;
    double c_big   = 1.0;
    double c_small = 0.5;

    Index iters(Index t, Index t_outer, Index r = 1, double kappa = 1.0) const
    {
        if (kind == Kind::linear)
        {
            if (t_outer <= 1)
            {
                return end;
            }
            const double frac = std::min(1.0, static_cast<double>(t) /
                                                  static_cast<double>(t_outer - 1));
            return static_cast<Index>(std::lround(static_cast<double>(start) +
                                                  frac * static_cast<double>(end - start)));
        }
        const double v =
            c_big * (std::log(static_cast<double>(std::max<Index>(r, 1))) +
                     std::log(std::max(kappa, 1.0)) +
                     static_cast<double>(t) * std::log(0.7) / std::log(1.0 - c_small));
        return std::max<Index>(1, static_cast<Index>(std::ceil(v)));
    }
};

enum class InitMode
{
    spectral,
    random,
};

struct AltMinConfig
{
    Index t_outer = 30;
    RwfSchedule rwf_schedule;
    double rwf_step       = 0.8;
    double rwf_init_trunc = 5.0;
    bool rwf_warm_select  = true;  // also try the previous estimate per column
    double cg_tol         = 1e-10;
    Index cg_max_iters    = 500;
    RankSelection rank;
    double c_y                  = 9.0;
    ThresholdMode threshold_mode = ThresholdMode::global;
    bool sample_split           = false;
    bool linear_mode            = false;
    InitMode init_mode          = InitMode::spectral;
    std::uint64_t init_seed     = 0;
    double stop_rel_change      = 1e-9;
    double success_tol          = 1e-6;

    void validate() const
    {
        if (t_outer < 1)
        {
            throw Error("AltMinConfig: t_outer must be >= 1");
        }
        if (!(cg_tol > 0.0 && cg_tol < 1.0))
        {
            throw Error("AltMinConfig: cg_tol must lie in (0, 1)");
        }
        if (cg_max_iters < 1)
        {
            throw Error("AltMinConfig: cg_max_iters must be >= 1");
        }
    }
};

/// Per-column measurement signs, entries in {−1, +1}.
struct PhaseMatrix
{
    std::vector<Vector> signs;

    Index q() const noexcept { return static_cast<Index>(signs.size()); }
};

struct BUpdate
{
    Matrix bhat;  // r x q
    Matrix xhat;  // n x q
    Index degenerate = 0;
};

///
/// Coefficient step: for every column solve the r-dimensional phase
/// retrieval problem with design `uᵀA_k` (or, in linear mode, the exact
/// least-squares fit) and lift back with `x̂_k = u b̂_k`.
///
/// With `warm_x` (n x q, the previous estimate) each column is also solved
/// from `uᵀ x̂_k` and the candidate with the smaller amplitude loss is kept.
///
inline BUpdate update_b(const BasisMatrix& u, const MeasurementBatch& batch, Index rwf_iters,
                        bool linear_mode = false, double step_size = 0.8,
                        double init_trunc = 5.0, const Matrix* warm_x = nullptr)
{
    if (warm_x && (warm_x->rows() != batch.n() || warm_x->cols() != batch.q()))
    {
        throw DimensionMismatch("update_b: warm estimate shape mismatch");
    }
    require_same_rows(u.mat(), batch.design(0), "update_b");
    const Index r = u.cols();
    const Index q = batch.q();
    BUpdate out;
    out.bhat.resize(r, q);
    RwfConfig rcfg;
    rcfg.max_iters  = rwf_iters;
    rcfg.step_size  = step_size;
    rcfg.init_trunc = init_trunc;
    Matrix reduced(r, batch.m());
    for (Index k = 0; k < q; ++k)
    {
        reduced.noalias() = u.mat().transpose() * batch.design(k);
        if (linear_mode)
        {
            out.bhat.col(k) = reduced.transpose().colPivHouseholderQr().solve(batch.obs(k));
            continue;
        }
        RwfResult res = rwf_solve(batch.obs(k), reduced, rcfg);
        if (warm_x)
        {
            RwfConfig wcfg  = rcfg;
            wcfg.warm_start = u.mat().transpose() * warm_x->col(k);
            if (!wcfg.warm_start->isZero(0.0))
            {
                RwfResult alt = rwf_solve(batch.obs(k), reduced, wcfg);
                if (res.degenerate || amplitude_loss(alt.x, batch.obs(k), reduced) <
                                          amplitude_loss(res.x, batch.obs(k), reduced))
                {
                    res = std::move(alt);
                }
            }
        }
        if (res.degenerate)
        {
            ++out.degenerate;
        }
        out.bhat.col(k) = res.x;
    }
    out.xhat = u.mat() * out.bhat;
    return out;
}

/// `ĉ_ik = sign(a_ikᵀ x̂_k)` with sign(0) = +1.
inline PhaseMatrix estimate_phases(const Matrix& xhat, const MeasurementBatch& batch)
{
    if (xhat.cols() != batch.q() || xhat.rows() != batch.n())
    {
        throw DimensionMismatch("estimate_phases: shape mismatch");
    }
    PhaseMatrix p;
    p.signs.reserve(static_cast<std::size_t>(batch.q()));
    for (Index k = 0; k < batch.q(); ++k)
    {
        Vector z = batch.design(k).transpose() * xhat.col(k);
        p.signs.emplace_back(z.unaryExpr([](double v) { return sign_of(v); }));
    }
    return p;
}

inline PhaseMatrix identity_phases(const MeasurementBatch& batch)
{
    PhaseMatrix p;
    p.signs.assign(static_cast<std::size_t>(batch.q()), Vector::Ones(batch.m()));
    return p;
}

///
/// Normal operator of the subspace least-squares problem,
/// `W ↦ Σ_k A_k (A_kᵀ W b_k) b_kᵀ`, applied without assembling the
/// nr x nr matrix. Symmetric positive semidefinite.
///
class SubspaceNormalOperator
{
public:
    SubspaceNormalOperator(const MeasurementBatch& batch, const Matrix& b)
        : m_batch(&batch), m_b(&b)
    {
        if (b.cols() != batch.q())
        {
            throw DimensionMismatch("SubspaceNormalOperator: B must have q columns");
        }
    }

    Matrix operator()(const Matrix& w) const
    {
        const Matrix proj = w * (*m_b);
        Matrix lifted(m_batch->n(), m_batch->q());
        Vector v(m_batch->m());
        for (Index k = 0; k < m_batch->q(); ++k)
        {
            const Matrix& a = m_batch->design(k);
            v.noalias()     = a.transpose() * proj.col(k);
            lifted.col(k).noalias() = a * v;
        }
        return lifted * m_b->transpose();
    }

    /// `Σ_k A_k (ĉ_k ∘ y_k) b_kᵀ`.
    Matrix rhs(const PhaseMatrix& phases) const
    {
        Matrix lifted(m_batch->n(), m_batch->q());
        for (Index k = 0; k < m_batch->q(); ++k)
        {
            lifted.col(k).noalias() =
                m_batch->design(k) *
                phases.signs[static_cast<std::size_t>(k)].cwiseProduct(m_batch->obs(k));
        }
        return lifted * m_b->transpose();
    }

private:
    const MeasurementBatch* m_batch;
    const Matrix* m_b;
};

struct UUpdate
{
    BasisMatrix u;
    Matrix raw;  // least-squares solution before QR
    CgResult cg;
};

///
/// Subspace step: `argmin_U Σ_k ‖ĉ_k ∘ y_k − A_kᵀ U b_k‖²` by conjugate
/// gradient on the normal equations, followed by QR. `b` must have
/// orthonormal rows. A non-converged solve still returns the current
/// iterate (flagged in `cg.converged`).
///
inline UUpdate update_u(const Matrix& b, const PhaseMatrix& phases, const MeasurementBatch& batch,
                        double cg_tol = 1e-10, Index cg_max_iters = 500,
                        const Matrix* warm_start = nullptr)
{
    if (phases.q() != batch.q())
    {
        throw DimensionMismatch("update_u: phase count mismatch");
    }
    if (BasisMatrix::orthonormality_defect(b.transpose()) > 1e-8)
    {
        throw Error("update_u: b must have orthonormal rows");
    }
    SubspaceNormalOperator op(batch, b);
    const Matrix rhs = op.rhs(phases);
    UUpdate out;
    if (warm_start && warm_start->rows() == batch.n() && warm_start->cols() == b.rows())
    {
        out.raw = *warm_start;
    }
    else
    {
        out.raw = Matrix::Zero(batch.n(), b.rows());
    }
    out.cg = conjugate_gradient(op, rhs, out.raw, cg_tol, cg_max_iters);
    out.u  = orthonormalize(out.raw).q;
    return out;
}

namespace detail
{
class Stopwatch
{
public:
    using clock = std::chrono::steady_clock;

    Stopwatch() : m_start(clock::now()) {}

    double elapsed() const
    {
        const double total = std::chrono::duration<double>(clock::now() - m_start).count();
        return total - m_paused;
    }

    template <typename F>
    void excluded(F&& f)
    {
        const auto t0 = clock::now();
        f();
        m_paused += std::chrono::duration<double>(clock::now() - t0).count();
    }

private:
    clock::time_point m_start;
    double m_paused = 0.0;
};

inline Index select_rank(const RankSelection& sel, const SymmetricSpectrum& spec,
                         const GroundTruth* gt, Index q)
{
    switch (sel.mode)
    {
    case RankMode::fixed:
        if (sel.fixed_rank > 0)
        {
            return sel.fixed_rank;
        }
        if (gt)
        {
            return gt->rank();
        }
        throw Error("rank selection: fixed mode needs a rank or a ground truth");
    case RankMode::threshold:
        if (sel.omega)
        {
            return estimate_rank_threshold(spec.values, *sel.omega);
        }
        if (gt)
        {
            const double s = gt->sigma_min();
            return estimate_rank_threshold(spec.values,
                                           sel.omega_mult * s * s / static_cast<double>(q));
        }
        return estimate_rank_gap(spec.values);
    case RankMode::gap:
        return estimate_rank_gap(spec.values);
    }
    return 0;
}
}  // namespace detail

///
/// AltMinLowRaP. Pass `gt` to record subspace and matrix errors in the
/// trace; pass `initial` to skip spectral initialization.
///
inline RecoveryResult altmin_lowrap(const MeasurementBatch& batch, const AltMinConfig& cfg,
                                    const GroundTruth* gt = nullptr,
                                    const BasisMatrix* initial = nullptr)
{
    cfg.validate();
    if (cfg.linear_mode && batch.kind() != ObservationKind::linear)
    {
        throw Error("altmin: linear mode needs signed observations");
    }
    detail::Stopwatch clock;
    RecoveryResult result;

    // Sample splitting: one init set and 2T disjoint sets for the loop.
    std::optional<SamplePartition> part;
    std::vector<MeasurementBatch> split_batches;
    if (cfg.sample_split)
    {
        part = split_samples(batch.m(), cfg.t_outer);
        for (const auto& blk : part->blocks)
        {
            split_batches.push_back(batch.slice_measurements(blk.begin, blk.size));
        }
    }
    const MeasurementBatch init_batch =
        part ? batch.slice_measurements(part->init.begin, part->init.size) : MeasurementBatch();
    const MeasurementBatch& init_src = part ? init_batch : batch;
    auto b_batch = [&](Index t) -> const MeasurementBatch& {
        return part ? split_batches[static_cast<std::size_t>(t)] : batch;
    };
    auto u_batch = [&](Index t) -> const MeasurementBatch& {
        return part ? split_batches[static_cast<std::size_t>(cfg.t_outer + t)] : batch;
    };

    BasisMatrix u;
    if (initial)
    {
        u                = *initial;
        result.rank_used = u.cols();
    }
    else
    {
        const YuMatrix yu          = build_yu(init_src, cfg.c_y, cfg.threshold_mode);
        const bool need_vectors    = cfg.init_mode == InitMode::spectral;
        const SymmetricSpectrum sp = yu_spectrum(yu, true);
        result.rank_used           = detail::select_rank(cfg.rank, sp, gt, batch.q());
        if (result.rank_used < 1)
        {
            result.status = RecoveryStatus::degenerate_rank;
            return result;
        }
        if (result.rank_used > std::min(batch.n(), batch.q()))
        {
            result.rank_used = std::min(batch.n(), batch.q());
        }
        if (need_vectors)
        {
            u = init_subspace(sp, result.rank_used);
        }
        else
        {
            u = random_basis(batch.n(), result.rank_used, cfg.init_seed);
        }
    }
    std::optional<BasisMatrix> ref;
    if (gt)
    {
        result.rank_mismatch = result.rank_used != gt->rank();
        ref                  = gt->reference_basis(result.rank_used);
    }

    const double kappa = gt ? gt->kappa : 1.0;
    Matrix prev_x;
    Matrix warm;
    bool stopped_early = false;
    for (Index t = 0; t < cfg.t_outer; ++t)
    {
        const Index iters = cfg.rwf_schedule.iters(t, cfg.t_outer, u.cols(), kappa);
        const bool warm_ok = cfg.rwf_warm_select && !cfg.linear_mode && prev_x.size() &&
                             prev_x.cols() == b_batch(t).q();
        BUpdate bu = update_b(u, b_batch(t), iters, cfg.linear_mode, cfg.rwf_step,
                              cfg.rwf_init_trunc, warm_ok ? &prev_x : nullptr);
        result.rwf_degenerate += bu.degenerate;

        IterationRecord rec;
        rec.iter      = t;
        rec.elapsed_s = clock.elapsed();
        clock.excluded([&] {
            if (gt)
            {
                rec.se          = subspace_error(u, *ref);
                rec.matdist_rel = relative_mat_dist(bu.xhat, gt->xstar);
            }
        });

        double rel_change = std::numeric_limits<double>::infinity();
        if (prev_x.size())
        {
            const double denom = bu.xhat.norm();
            rel_change = denom > 0.0 ? mat_dist(bu.xhat, prev_x) / denom : 0.0;
        }
        const bool last = t + 1 == cfg.t_outer || rel_change < cfg.stop_rel_change;
        if (last)
        {
            stopped_early = rel_change < cfg.stop_rel_change;
            result.trace.push_back(rec);
            result.uhat = u;
            result.bhat = std::move(bu.bhat);
            result.xhat = std::move(bu.xhat);
            break;
        }

        const PhaseMatrix phases =
            cfg.linear_mode ? identity_phases(u_batch(t)) : estimate_phases(bu.xhat, u_batch(t));
        QrFactors bq;
        try
        {
            bq = orthonormalize(bu.bhat.transpose());
        }
        catch (const RankDeficient&)
        {
            result.trace.push_back(rec);
            result.uhat   = u;
            result.bhat   = std::move(bu.bhat);
            result.xhat   = std::move(bu.xhat);
            result.status = RecoveryStatus::failed;
            return result;
        }
        const Matrix b_rows = bq.q.mat().transpose();
        // Current estimate expressed against the new row basis: U Rᵀ.
        warm = u.mat() * bq.r.transpose();
        UUpdate uu = update_u(b_rows, phases, u_batch(t), cfg.cg_tol, cfg.cg_max_iters, &warm);
        rec.cg_iterations = uu.cg.iterations;
        if (!uu.cg.converged)
        {
            ++result.cg_nonconverged;
        }
        result.trace.push_back(rec);
        prev_x = std::move(bu.xhat);
        u      = std::move(uu.u);
    }

    if (gt)
    {
        const double final_err = result.trace.back().matdist_rel;
        result.status = final_err <= cfg.success_tol ? RecoveryStatus::converged
                                                     : RecoveryStatus::failed;
    }
    else
    {
        result.status = stopped_early ? RecoveryStatus::converged : RecoveryStatus::failed;
    }
    return result;
}

///
/// Phase-known variant: least-squares coefficient step and identity signs.
/// `batch` must carry signed observations `y_k = A_kᵀ x*_k`.
///
inline RecoveryResult compressive_pca(const MeasurementBatch& batch, AltMinConfig cfg,
                                      const GroundTruth* gt = nullptr,
                                      const BasisMatrix* initial = nullptr)
{
    if (batch.kind() != ObservationKind::linear)
    {
        throw Error("compressive_pca: batch must carry signed observations");
    }
    cfg.linear_mode = true;
    return altmin_lowrap(batch, cfg, gt, initial);
}

}  // namespace lrpr
