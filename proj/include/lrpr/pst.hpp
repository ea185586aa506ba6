///
/// \file pst.hpp
///
/// Phaseless subspace tracking over mini-batches of `alpha` consecutive
/// columns. The tracker alternates between an update mode (one alternating
/// minimization epoch per batch, T epochs per subspace) and a detect mode
/// (spectral change test against the frozen estimate). PST-all keeps
/// updating while detecting.
///
#pragma once

#include "altmin.hpp"
#include "core.hpp"
#include "measurement.hpp"
#include "rwf.hpp"
#include "specinit.hpp"

#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace lrpr
{

enum class DetectionRule
{
    /// `SE²(frozen, top-r eigenvectors of the batch Y_U) ≥ ω_det`.
    subspace_shift,
    /// `λ_max − λ_{n−r}` of `(I − UUᵀ) Y_U (I − UUᵀ)` ≥ ω_det.
    eigen_gap,
};

struct TrackerConfig
{
    Index alpha      = 250;
    Index t_epochs   = 8;
    double omega_det = 0.6;
    Index rank       = 2;
    bool pst_all     = false;
    DetectionRule detection = DetectionRule::subspace_shift;
    RwfSchedule rwf_schedule;
    double rwf_step       = 0.8;
    double rwf_init_trunc = 5.0;
    double c_y                   = 9.0;
    ThresholdMode threshold_mode = ThresholdMode::global;
    double cg_tol         = 1e-10;
    Index cg_max_iters    = 500;

    void validate() const
    {
        if (rank < 1 || alpha < rank)
        {
            throw Error("TrackerConfig: need alpha >= r >= 1");
        }
        if (!(omega_det > 0.0))
        {
            throw Error("TrackerConfig: omega_det must be positive");
        }
        if (t_epochs < 1)
        {
            throw Error("TrackerConfig: t_epochs must be >= 1");
        }
    }
};

enum class TrackerMode
{
    update,
    detect,
};

inline const char* to_string(TrackerMode m) noexcept
{
    return m == TrackerMode::update ? "update" : "detect";
}

struct TrackerState
{
    TrackerMode mode = TrackerMode::update;
    Index j          = 0;
    Index ell        = 0;
    std::vector<Index> khat{0};
    std::optional<BasisMatrix> current_u;
    std::optional<BasisMatrix> prev_u;
    std::vector<BasisMatrix> segment_bases;  // final estimate of each closed segment

    /// Empty string when consistent, otherwise a description of the violation.
    std::string invariant_violation(const TrackerConfig& cfg) const
    {
        if (mode == TrackerMode::detect && ell != cfg.t_epochs)
        {
            return "detect mode with ell != T";
        }
        if (ell < 0 || ell > cfg.t_epochs)
        {
            return "ell out of range";
        }
        for (std::size_t i = 1; i < khat.size(); ++i)
        {
            if (khat[i] <= khat[i - 1])
            {
                return "change times not strictly increasing";
            }
        }
        if (static_cast<Index>(khat.size()) != j + 1)
        {
            return "segment index does not match change-time count";
        }
        if (mode == TrackerMode::detect && !prev_u)
        {
            return "detect mode without a frozen subspace";
        }
        return {};
    }
};

struct DetectStatistic
{
    double value    = 0.0;
    bool degenerate = false;
};

///
/// `λ_max − λ_{n−r}` of `(I − UUᵀ) Y_U (I − UUᵀ)` with `Y_U` built over the
/// batch. Zero when `prev_u` spans the whole space or `Y_U` is degenerate.
///
inline DetectStatistic detect_statistic(const MeasurementBatch& batch, const BasisMatrix& prev_u,
                                        double c_y = 9.0,
                                        ThresholdMode mode = ThresholdMode::global)
{
    require_same_rows(prev_u.mat(), batch.design(0), "detect_statistic");
    const Index n = batch.n();
    const Index r = prev_u.cols();
    if (r >= n)
    {
        return {0.0, false};
    }
    YuMatrix yu;
    try
    {
        yu = build_yu(batch, c_y, mode);
    }
    catch (const DegenerateData&)
    {
        return {0.0, true};
    }
    const Matrix& u = prev_u.mat();
    // P Y P with P = I − UUᵀ, formed as Y − UUᵀY − YUUᵀ + UUᵀYUUᵀ.
    const Matrix yu_u  = yu.mat * u;
    const Matrix utyu  = u.transpose() * yu_u;
    Matrix proj        = yu.mat - u * yu_u.transpose() - yu_u * u.transpose() +
                  u * utyu * u.transpose();
    proj = 0.5 * (proj + proj.transpose()).eval();
    const Vector ev = symmetric_spectrum(proj, false).values;
    return {ev(0) - ev(n - r - 1), false};
}

///
/// `SE²(prev_u, top-r eigenvectors of Y_U)` for the batch. Same scale as the
/// squared change magnitude.
///
inline DetectStatistic detect_subspace_shift(const MeasurementBatch& batch,
                                             const BasisMatrix& prev_u, double c_y = 9.0,
                                             ThresholdMode mode = ThresholdMode::global)
{
    require_same_rows(prev_u.mat(), batch.design(0), "detect_subspace_shift");
    if (prev_u.cols() >= batch.n())
    {
        return {0.0, false};
    }
    try
    {
        const BasisMatrix fresh = init_subspace(build_yu(batch, c_y, mode), prev_u.cols());
        const double se         = subspace_error(prev_u, fresh);
        return {se * se, false};
    }
    catch (const DegenerateData&)
    {
        return {0.0, true};
    }
}

struct BatchRecord
{
    Index batch_start     = 0;
    TrackerMode mode_in   = TrackerMode::update;
    TrackerMode mode_out  = TrackerMode::update;
    Index ell_out         = 0;
    double statistic      = std::numeric_limits<double>::quiet_NaN();
    bool detected         = false;
    bool updated          = false;
    double se             = std::numeric_limits<double>::quiet_NaN();
};

namespace detail
{
/// One alternating-minimization epoch on a mini-batch.
inline BasisMatrix tracker_epoch(const BasisMatrix& u, const MeasurementBatch& batch,
                                 const TrackerConfig& cfg, Index epoch)
{
    const Index iters = cfg.rwf_schedule.iters(epoch, cfg.t_epochs, u.cols());
    BUpdate bu = update_b(u, batch, iters, false, cfg.rwf_step, cfg.rwf_init_trunc);
    const PhaseMatrix phases = estimate_phases(bu.xhat, batch);
    QrFactors bq;
    try
    {
        bq = orthonormalize(bu.bhat.transpose());
    }
    catch (const RankDeficient&)
    {
        return u;
    }
    const Matrix warm = u.mat() * bq.r.transpose();
    return update_u(bq.q.mat().transpose(), phases, batch, cfg.cg_tol, cfg.cg_max_iters, &warm)
        .u;
}
}  // namespace detail

///
/// Advance the state machine by one mini-batch. Batches must arrive in
/// column order. `truth`, when given, is used only to fill `BatchRecord::se`.
///
inline BatchRecord tracker_step(TrackerState& state, const MeasurementBatch& batch,
                                const TrackerConfig& cfg, const BasisMatrix* truth = nullptr)
{
    BatchRecord rec;
    rec.batch_start = batch.column_offset();
    rec.mode_in     = state.mode;

    if (state.mode == TrackerMode::update)
    {
        if (state.ell == 0 || !state.current_u)
        {
            state.current_u = init_subspace(build_yu(batch, cfg.c_y, cfg.threshold_mode),
                                            cfg.rank);
        }
        state.current_u = detail::tracker_epoch(*state.current_u, batch, cfg, state.ell);
        rec.updated     = true;
        ++state.ell;
        if (state.ell == cfg.t_epochs)
        {
            state.prev_u = state.current_u;
            state.mode   = TrackerMode::detect;
        }
    }
    else
    {
        const DetectStatistic stat =
            cfg.detection == DetectionRule::eigen_gap
                ? detect_statistic(batch, *state.prev_u, cfg.c_y, cfg.threshold_mode)
                : detect_subspace_shift(batch, *state.prev_u, cfg.c_y, cfg.threshold_mode);
        rec.statistic = stat.value;
        if (cfg.pst_all)
        {
            state.current_u = detail::tracker_epoch(*state.current_u, batch, cfg,
                                                    cfg.t_epochs - 1);
            rec.updated     = true;
        }
        if (!stat.degenerate && stat.value >= cfg.omega_det)
        {
            rec.detected = true;
            state.segment_bases.push_back(*state.current_u);
            ++state.j;
            state.khat.push_back(batch.column_offset());
            state.ell  = 0;
            state.mode = TrackerMode::update;
        }
    }
    rec.mode_out = state.mode;
    rec.ell_out  = state.ell;
    if (truth && state.current_u)
    {
        rec.se = subspace_error(*state.current_u, *truth);
    }
    return rec;
}

///
/// Streaming front end around `tracker_step`.
///
class PhaselessSubspaceTracker
{
public:
    explicit PhaselessSubspaceTracker(TrackerConfig cfg) : m_cfg(std::move(cfg))
    {
        m_cfg.validate();
    }

    /// Start in detect mode with `frozen` as the current segment's estimate.
    static PhaselessSubspaceTracker detecting_from(TrackerConfig cfg, const BasisMatrix& frozen)
    {
        PhaselessSubspaceTracker t(std::move(cfg));
        t.m_state.mode      = TrackerMode::detect;
        t.m_state.ell       = t.m_cfg.t_epochs;
        t.m_state.current_u = frozen;
        t.m_state.prev_u    = frozen;
        return t;
    }

    BatchRecord push(const MeasurementBatch& batch, const BasisMatrix* truth = nullptr)
    {
        if (m_started && batch.column_offset() < m_next_column)
        {
            throw Error("tracker: batches must arrive in column order");
        }
        if (!m_started)
        {
            m_state.khat.front() = batch.column_offset();
        }
        m_started     = true;
        m_next_column = batch.column_offset() + batch.q();
        return tracker_step(m_state, batch, m_cfg, truth);
    }

    const TrackerState& state() const noexcept { return m_state; }
    const TrackerConfig& config() const noexcept { return m_cfg; }

    /// Estimates of every segment seen so far, the open one last.
    std::vector<BasisMatrix> segment_estimates() const
    {
        std::vector<BasisMatrix> out = m_state.segment_bases;
        if (m_state.current_u)
        {
            out.push_back(*m_state.current_u);
        }
        return out;
    }

private:
    TrackerConfig m_cfg;
    TrackerState m_state;
    bool m_started      = false;
    Index m_next_column = 0;
};

struct OfflineResult
{
    Matrix xhat;
    std::vector<std::string> warnings;
};

///
/// Recover every column with the union basis of its segment and the next
/// one, `x̂_k = U d̂_k` with `d̂_k` from RWF on `(y_k, UᵀA_k)`.
///
/// `khat` holds the first global column of each segment (khat[0] is the
/// start of the history) and `segment_bases[j]` the estimate for segment j.
///
inline OfflineResult offline_smooth(const std::vector<MeasurementBatch>& history,
                                    const std::vector<Index>& khat,
                                    const std::vector<BasisMatrix>& segment_bases,
                                    const RwfConfig& rwf = {}, double dedup_tol = 1e-8)
{
    if (history.empty())
    {
        return {};
    }
    if (khat.size() != segment_bases.size() || khat.empty())
    {
        throw Error("offline_smooth: one change time per segment basis required");
    }
    const Index first = history.front().column_offset();
    Index total       = 0;
    for (const auto& b : history)
    {
        total += b.q();
    }
    const Index n = history.front().n();
    OfflineResult out;
    out.xhat = Matrix::Zero(n, total);

    std::vector<BasisMatrix> unions;
    std::vector<Index> counts(segment_bases.size(), 0);
    for (std::size_t j = 0; j < segment_bases.size(); ++j)
    {
        if (j + 1 < segment_bases.size())
        {
            Matrix both(n, segment_bases[j].cols() + segment_bases[j + 1].cols());
            both << segment_bases[j].mat(), segment_bases[j + 1].mat();
            unions.push_back(span_basis(both, dedup_tol));
        }
        else
        {
            unions.push_back(segment_bases[j]);
        }
    }
    auto segment_of = [&](Index col) {
        std::size_t seg = 0;
        for (std::size_t j = 1; j < khat.size(); ++j)
        {
            if (col >= khat[j])
            {
                seg = j;
            }
        }
        return seg;
    };

    for (const auto& b : history)
    {
        for (Index k = 0; k < b.q(); ++k)
        {
            const Index col       = b.column_offset() + k;
            const std::size_t seg = segment_of(col);
            ++counts[seg];
            const Matrix& basis = unions[seg].mat();
            const Matrix reduced = basis.transpose() * b.design(k);
            const RwfResult res  = rwf_solve(b.obs(k), reduced, rwf);
            out.xhat.col(col - first) = basis * res.x;
        }
    }
    for (std::size_t j = 0; j < counts.size(); ++j)
    {
        if (counts[j] == 0)
        {
            out.warnings.push_back("segment " + std::to_string(j) + " is empty; skipped");
        }
    }
    return out;
}

}  // namespace lrpr
