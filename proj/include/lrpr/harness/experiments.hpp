///
/// \file experiments.hpp
///
/// Synthetic experiment runners: recovery batteries, rank estimation,
/// the RWF time comparison, the linear variant and subspace tracking.
///
#pragma once

#include "../altmin.hpp"
#include "../pst.hpp"
#include "../rwf.hpp"
#include "../synth.hpp"
#include "config.hpp"
#include "trials.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace lrpr::harness
{

//------------------------------------------------------------------------------
// Recovery (phaseless and linear)
//------------------------------------------------------------------------------

struct RecoverReport
{
    std::vector<TrialRecord> trials;
    std::vector<AggregateRow> aggregate;
    std::vector<Index> ranks_used;
    double final_error = std::numeric_limits<double>::infinity();
    Index converged    = 0;
    bool passed        = false;
    Matrix first_uhat;  // trial 0 estimates, for dumping
    Matrix first_xhat;
};

inline SynthConfig trial_synth(const ExperimentConfig& cfg, Index trial)
{
    SynthConfig s = cfg.synth;
    s.seed        = trial_seed(cfg.synth.seed, trial);
    return s;
}

/// One recovery trial; `linear` selects signed measurements and compressive PCA.
inline RecoveryResult recover_once(const SynthConfig& s, const AltMinConfig& acfg, bool linear,
                                   GroundTruth* truth_out = nullptr)
{
    const GroundTruth gt = gen_ground_truth(s);
    AltMinConfig a       = acfg;
    a.sample_split       = a.sample_split || s.sample_split;
    RecoveryResult res;
    if (linear)
    {
        res = compressive_pca(gen_linear_measurements(gt.xstar, s.m, s.seed), a, &gt);
    }
    else
    {
        res = altmin_lowrap(gen_measurements(gt.xstar, s.m, s.seed), a, &gt);
    }
    if (truth_out)
    {
        *truth_out = gt;
    }
    return res;
}

inline RecoverReport run_recover(const ExperimentConfig& cfg)
{
    const bool linear = cfg.kind == ExperimentKind::pca_linear;
    struct Outcome
    {
        TrialRecord rec;
        Index rank = 0;
        Matrix uhat, xhat;
    };
    auto outcomes = run_indexed<Outcome>(cfg.trials, resolve_threads(cfg.threads), [&](Index t) {
        const SynthConfig s = trial_synth(cfg, t);
        RecoveryResult res  = recover_once(s, cfg.altmin, linear);
        Outcome o;
        o.rec  = {t, s.seed, std::move(res.trace), res.status};
        o.rank = res.rank_used;
        if (t == 0 && res.uhat.cols() > 0)
        {
            o.uhat = res.uhat.mat();
            o.xhat = std::move(res.xhat);
        }
        return o;
    });
    RecoverReport rep;
    for (auto& o : outcomes)
    {
        rep.converged += o.rec.status == RecoveryStatus::converged;
        rep.ranks_used.push_back(o.rank);
        if (o.rec.trial == 0)
        {
            rep.first_uhat = std::move(o.uhat);
            rep.first_xhat = std::move(o.xhat);
        }
        rep.trials.push_back(std::move(o.rec));
    }
    rep.aggregate = aggregate_best(rep.trials, cfg.keep_best);
    if (!rep.aggregate.empty())
    {
        rep.final_error = rep.aggregate.back().mean_matdist_rel;
    }
    rep.passed = rep.final_error <= cfg.altmin.success_tol;
    return rep;
}

//------------------------------------------------------------------------------
// Rank estimation
//------------------------------------------------------------------------------

struct RankTrial
{
    Index trial        = 0;
    std::uint64_t seed = 0;
    Index true_rank    = 0;
    double omega       = 0.0;
    Index by_threshold = 0;
    Index by_gap       = 0;
    Vector eigenvalues;  // descending
};

struct RankReport
{
    std::vector<RankTrial> trials;
    Index threshold_hits = 0;
    Index gap_hits       = 0;
    bool passed          = false;
};

inline RankTrial rank_trial(const SynthConfig& s, const AltMinConfig& a, Index trial)
{
    const GroundTruth gt = gen_ground_truth(s);
    const YuMatrix yu    = build_yu(gen_measurements(gt.xstar, s.m, s.seed), a.c_y,
                                    a.threshold_mode);
    RankTrial t;
    t.trial       = trial;
    t.seed        = s.seed;
    t.true_rank   = gt.rank();
    t.eigenvalues = yu_spectrum(yu, false).values;
    const double smin = gt.sigma_min();
    t.omega        = a.rank.omega ? *a.rank.omega
                                  : a.rank.omega_mult * smin * smin / static_cast<double>(s.q);
    t.by_threshold = estimate_rank_threshold(t.eigenvalues, t.omega);
    t.by_gap       = estimate_rank_gap(t.eigenvalues);
    return t;
}

inline RankReport run_rank_est(const ExperimentConfig& cfg)
{
    RankReport rep;
    rep.trials = run_indexed<RankTrial>(cfg.trials, resolve_threads(cfg.threads), [&](Index t) {
        return rank_trial(trial_synth(cfg, t), cfg.altmin, t);
    });
    for (const auto& t : rep.trials)
    {
        rep.threshold_hits += t.by_threshold == t.true_rank;
        rep.gap_hits += t.by_gap == t.true_rank;
    }
    rep.passed = static_cast<double>(rep.threshold_hits) >=
                 cfg.rank_success_rate * static_cast<double>(cfg.trials);
    return rep;
}

inline void write_rank_csv(std::ostream& os, const std::vector<RankTrial>& trials)
{
    full_precision(os) << "trial,seed,true_rank,omega,rank_threshold,rank_gap,lambda_r,"
                          "lambda_r_plus_1,lambda_n\n";
    for (const auto& t : trials)
    {
        const Index n = t.eigenvalues.size();
        const Index r = std::min(t.true_rank, n);
        os << t.trial << ',' << t.seed << ',' << t.true_rank << ',' << t.omega << ','
           << t.by_threshold << ',' << t.by_gap << ',' << t.eigenvalues(r - 1) << ','
           << (r < n ? t.eigenvalues(r) : t.eigenvalues(n - 1)) << ',' << t.eigenvalues(n - 1)
           << '\n';
    }
}

inline void write_eigen_csv(std::ostream& os, const std::vector<RankTrial>& trials)
{
    full_precision(os) << "trial,index,eigenvalue\n";
    for (const auto& t : trials)
    {
        for (Index i = 0; i < t.eigenvalues.size(); ++i)
        {
            os << t.trial << ',' << i + 1 << ',' << t.eigenvalues(i) << '\n';
        }
    }
}

//------------------------------------------------------------------------------
// Unstructured baseline and time comparison
//------------------------------------------------------------------------------

struct BaselineRun
{
    Matrix xhat;
    double seconds      = 0.0;  // solver time summed over finished columns
    Index columns_done  = 0;
    Index columns_hit   = 0;  // columns that reached col_tol
    bool censored       = false;
};

///
/// Standalone RWF on every column of `xstar` with `m` fresh measurements.
/// Each column stops once its relative error drops to `col_tol` (checked
/// against the truth outside the timed region) or after `cfg.max_iters`
/// steps. Processing stops early once the accumulated solver time exceeds
/// `time_cap`. Designs come from their own stream domain.
///
inline BaselineRun rwf_baseline(const Matrix& xstar, Index m, std::uint64_t seed,
                                const RwfConfig& cfg, double col_tol,
                                double time_cap = std::numeric_limits<double>::infinity())
{
    using clock = std::chrono::steady_clock;
    cfg.validate();
    const Index n = xstar.rows();
    const Index q = xstar.cols();
    const std::uint64_t dseed = tagged_seed(seed, StreamTag::baseline);
    BaselineRun out;
    out.xhat = Matrix::Zero(n, q);
    for (Index k = 0; k < q; ++k)
    {
        if (out.seconds > time_cap)
        {
            out.censored = true;
            break;
        }
        const Matrix a     = gaussian_design(n, m, dseed, k);
        const Vector truth = xstar.col(k);
        const Vector y     = (a.transpose() * truth).cwiseAbs();
        const double scale = truth.norm() > 0.0 ? truth.norm() : 1.0;

        auto t0  = clock::now();
        Vector x = rwf_init(y, a, cfg);
        out.seconds += std::chrono::duration<double>(clock::now() - t0).count();
        bool hit = phase_dist(truth, x) <= col_tol * scale;
        for (Index it = 0; it < cfg.max_iters && !hit; ++it)
        {
            t0 = clock::now();
            x  = rwf_step(x, y, a, cfg.step_size);
            out.seconds += std::chrono::duration<double>(clock::now() - t0).count();
            hit = phase_dist(truth, x) <= col_tol * scale;
        }
        out.xhat.col(k) = x;
        ++out.columns_done;
        out.columns_hit += hit;
    }
    return out;
}

struct TimeCompareTrial
{
    Index trial          = 0;
    std::uint64_t seed   = 0;
    double altmin_time_s = std::numeric_limits<double>::infinity();  // first trace row at target
    double altmin_final  = std::numeric_limits<double>::infinity();
    double rwf_time_s    = 0.0;
    bool rwf_reached     = false;
    bool rwf_censored    = false;
    Index rwf_columns    = 0;

    /// Speed-up of AltMin over RWF; a lower bound when the baseline was censored.
    double ratio() const
    {
        if (!std::isfinite(altmin_time_s))
        {
            return 0.0;
        }
        return rwf_time_s / altmin_time_s;
    }
};

struct TimeCompareReport
{
    std::vector<TimeCompareTrial> trials;
    double median_ratio = 0.0;
    bool passed         = false;
};

/// Time of the first trace row whose error is at most `target`; +inf if none.
inline double time_to_target(const std::vector<IterationRecord>& trace, double target)
{
    for (const auto& r : trace)
    {
        if (r.matdist_rel <= target)
        {
            return r.elapsed_s;
        }
    }
    return std::numeric_limits<double>::infinity();
}

inline TimeCompareTrial time_compare_trial(const ExperimentConfig& cfg, Index t)
{
    const SynthConfig s = trial_synth(cfg, t);
    GroundTruth gt;
    TimeCompareTrial out;
    out.trial = t;
    out.seed  = s.seed;
    {
        const RecoveryResult res = recover_once(s, cfg.altmin, false, &gt);
        out.altmin_time_s        = time_to_target(res.trace, cfg.time_compare.target);
        out.altmin_final = res.trace.empty() ? out.altmin_final : res.trace.back().matdist_rel;
    }
    RwfConfig rcfg;
    rcfg.max_iters        = cfg.time_compare.rwf_max_iters;
    rcfg.step_size        = cfg.altmin.rwf_step;
    rcfg.init_trunc       = cfg.altmin.rwf_init_trunc;
    const Index m_rwf     = static_cast<Index>(
        std::llround(cfg.time_compare.rwf_m_per_n * static_cast<double>(s.n)));
    const double cap      = std::isfinite(out.altmin_time_s)
                                ? cfg.time_compare.cap_ratio * out.altmin_time_s
                                : std::numeric_limits<double>::infinity();
    // Per-column tolerance at the target makes the matrix error at most the target.
    const BaselineRun base = rwf_baseline(gt.xstar, m_rwf, s.seed, rcfg, cfg.time_compare.target, cap);
    out.rwf_time_s   = base.seconds;
    out.rwf_censored = base.censored;
    out.rwf_columns  = base.columns_done;
    out.rwf_reached  = !base.censored && base.columns_hit == gt.q();
    return out;
}

///
/// Runs sequentially regardless of the thread setting, since the result is
/// a wall-clock ratio.
///
inline TimeCompareReport run_time_compare(const ExperimentConfig& cfg)
{
    TimeCompareReport rep;
    for (Index t = 0; t < cfg.trials; ++t)
    {
        rep.trials.push_back(time_compare_trial(cfg, t));
    }
    std::vector<double> ratios;
    for (const auto& t : rep.trials)
    {
        ratios.push_back(t.ratio());
    }
    rep.median_ratio = median(ratios);
    rep.passed       = rep.median_ratio >= cfg.time_compare.min_speedup;
    return rep;
}

inline void write_time_compare_csv(std::ostream& os, const std::vector<TimeCompareTrial>& trials)
{
    full_precision(os) << "trial,seed,altmin_time_s,altmin_final,rwf_time_s,rwf_reached,"
                          "rwf_censored,rwf_columns,ratio\n";
    for (const auto& t : trials)
    {
        os << t.trial << ',' << t.seed << ',' << t.altmin_time_s << ',' << t.altmin_final << ','
           << t.rwf_time_s << ',' << t.rwf_reached << ',' << t.rwf_censored << ','
           << t.rwf_columns << ',' << t.ratio() << '\n';
    }
}

//------------------------------------------------------------------------------
// Subspace tracking
//------------------------------------------------------------------------------

struct VariantTrace
{
    std::string variant;
    std::vector<BatchRecord> batches;
    std::vector<Index> khat;  // detected change times (excluding the stream start)
};

struct PstTrial
{
    Index trial        = 0;
    std::uint64_t seed = 0;
    std::vector<VariantTrace> variants;
};

struct DetectionSummary
{
    Index detected  = 0;  // changes matched by a detection
    Index missed    = 0;
    Index false_alarms = 0;
    Index max_delay = 0;
    std::vector<Index> delays;
};

///
/// Match detections to true change times. A detection at batch start `h`
/// belongs to the latest change `k` with `h + alpha > k` (the batch holds
/// post-change columns); a second detection for the same change, or one
/// before any change, is a false alarm. Delay is `max(0, h − k)`.
///
inline DetectionSummary match_detections(const std::vector<Index>& khat,
                                         const std::vector<Index>& changes, Index alpha)
{
    DetectionSummary s;
    std::vector<bool> used(changes.size(), false);
    for (Index h : khat)
    {
        std::ptrdiff_t owner = -1;
        for (std::size_t j = 0; j < changes.size(); ++j)
        {
            if (h + alpha > changes[j])
            {
                owner = static_cast<std::ptrdiff_t>(j);
            }
        }
        if (owner < 0 || used[static_cast<std::size_t>(owner)])
        {
            ++s.false_alarms;
            continue;
        }
        used[static_cast<std::size_t>(owner)] = true;
        const Index delay = std::max<Index>(0, h - changes[static_cast<std::size_t>(owner)]);
        s.delays.push_back(delay);
        s.max_delay = std::max(s.max_delay, delay);
        ++s.detected;
    }
    s.missed = static_cast<Index>(changes.size()) - s.detected;
    return s;
}

inline TrackerConfig variant_config(const ExperimentConfig& cfg, const std::string& variant)
{
    TrackerConfig t = cfg.tracker;
    t.rank          = cfg.synth.r;
    t.pst_all       = variant == "pst_all";
    return t;
}

///
/// One tracking run: all variants see the same stream of mini-batches.
/// SE in each record is measured against the subspace of the batch's
/// last column.
///
inline PstTrial pst_trial(const ExperimentConfig& cfg, Index trial)
{
    const SynthConfig s     = trial_synth(cfg, trial);
    const ChangeSchedule sc = make_change_schedule(s.n, s.r, cfg.pst.q_full,
                                                   cfg.pst.change_times, cfg.pst.change_se, s.seed);
    std::vector<PhaselessSubspaceTracker> trackers;
    PstTrial out;
    out.trial = trial;
    out.seed  = s.seed;
    for (const auto& v : cfg.pst.variants)
    {
        trackers.emplace_back(variant_config(cfg, v));
        out.variants.push_back({v, {}, {}});
    }
    const Index alpha = cfg.tracker.alpha;
    for (Index b0 = 0; b0 + alpha <= cfg.pst.q_full; b0 += alpha)
    {
        const MeasurementBatch batch = stream_batch(sc, b0, alpha, s.m, s.seed);
        const BasisMatrix& truth     = sc.basis_at(b0 + alpha - 1);
        for (std::size_t i = 0; i < trackers.size(); ++i)
        {
            out.variants[i].batches.push_back(trackers[i].push(batch, &truth));
        }
    }
    for (std::size_t i = 0; i < trackers.size(); ++i)
    {
        const auto& kh = trackers[i].state().khat;
        out.variants[i].khat.assign(kh.begin() + 1, kh.end());
    }
    return out;
}

struct VariantSummary
{
    std::string variant;
    std::vector<double> mean_se;  // per batch, over the best `keep_best` runs
    double final_se = std::numeric_limits<double>::infinity();
    Index n_kept    = 0;
    DetectionSummary detections;  // pooled over all runs
};

struct PstReport
{
    std::vector<PstTrial> trials;
    std::vector<VariantSummary> variants;
    bool passed = false;
};

inline PstReport run_pst_demo(const ExperimentConfig& cfg)
{
    PstReport rep;
    rep.trials = run_indexed<PstTrial>(cfg.trials, resolve_threads(cfg.threads),
                                       [&](Index t) { return pst_trial(cfg, t); });
    const auto& checks = cfg.pst.check_variants.empty() ? cfg.pst.variants : cfg.pst.check_variants;
    rep.passed         = true;
    for (std::size_t v = 0; v < cfg.pst.variants.size(); ++v)
    {
        VariantSummary sum;
        sum.variant = cfg.pst.variants[v];
        const auto final_se = [&](const PstTrial& t) {
            const auto& b = t.variants[v].batches;
            return b.empty() || std::isnan(b.back().se) ? std::numeric_limits<double>::infinity()
                                                        : b.back().se;
        };
        const auto kept = select_best(rep.trials, cfg.keep_best, final_se);
        sum.n_kept      = static_cast<Index>(kept.size());
        const std::size_t len = rep.trials.front().variants[v].batches.size();
        sum.mean_se.assign(len, 0.0);
        for (auto i : kept)
        {
            const auto& b = rep.trials[i].variants[v].batches;
            for (std::size_t j = 0; j < len; ++j)
            {
                const double se = std::isnan(b[j].se) ? 1.0 : b[j].se;
                sum.mean_se[j] += se / static_cast<double>(kept.size());
            }
        }
        sum.final_se = sum.mean_se.empty() ? sum.final_se : sum.mean_se.back();
        for (const auto& t : rep.trials)
        {
            const DetectionSummary d =
                match_detections(t.variants[v].khat, cfg.pst.change_times, cfg.tracker.alpha);
            sum.detections.detected += d.detected;
            sum.detections.missed += d.missed;
            sum.detections.false_alarms += d.false_alarms;
            sum.detections.max_delay = std::max(sum.detections.max_delay, d.max_delay);
            sum.detections.delays.insert(sum.detections.delays.end(), d.delays.begin(),
                                         d.delays.end());
        }
        if (std::find(checks.begin(), checks.end(), sum.variant) != checks.end())
        {
            rep.passed = rep.passed && sum.final_se < cfg.pst.success_se &&
                         sum.detections.max_delay <= 2 * cfg.tracker.alpha;
        }
        rep.variants.push_back(std::move(sum));
    }
    return rep;
}

inline void write_pst_trials_csv(std::ostream& os, const std::vector<PstTrial>& trials)
{
    full_precision(os) << "trial,seed,variant,batch_start,mode_in,mode_out,ell,statistic,"
                          "detected,updated,se\n";
    for (const auto& t : trials)
    {
        for (const auto& v : t.variants)
        {
            for (const auto& b : v.batches)
            {
                os << t.trial << ',' << t.seed << ',' << v.variant << ',' << b.batch_start << ','
                   << to_string(b.mode_in) << ',' << to_string(b.mode_out) << ',' << b.ell_out
                   << ',' << b.statistic << ',' << b.detected << ',' << b.updated << ',' << b.se
                   << '\n';
            }
        }
    }
}

inline void write_pst_aggregate_csv(std::ostream& os, const std::vector<VariantSummary>& vars,
                                    Index alpha)
{
    full_precision(os) << "variant,batch,batch_start,mean_se,n_kept\n";
    for (const auto& v : vars)
    {
        for (std::size_t j = 0; j < v.mean_se.size(); ++j)
        {
            os << v.variant << ',' << j << ',' << static_cast<Index>(j) * alpha << ','
               << v.mean_se[j] << ',' << v.n_kept << '\n';
        }
    }
}

/// Histogram of detection delays in units of mini-batches.
inline void write_delay_histogram_csv(std::ostream& os, const std::vector<VariantSummary>& vars,
                                      Index alpha)
{
    os << "variant,delay_batches,count\n";
    for (const auto& v : vars)
    {
        std::map<Index, Index> hist;
        for (Index d : v.detections.delays)
        {
            ++hist[d / alpha];
        }
        for (const auto& [bin, count] : hist)
        {
            os << v.variant << ',' << bin << ',' << count << '\n';
        }
    }
}

///
/// Basis within subspace error `eps` (and above 0.9·eps) of `u`, obtained by
/// a small rotation along a random skew-symmetric generator.
///
inline BasisMatrix perturb_basis(const BasisMatrix& u, double eps, std::uint64_t seed)
{
    const Matrix skew  = random_skew(u.rows(), seed);
    const double probe = 1e-6;
    const double slope = subspace_error(u, rotate_with(u, skew, probe)) / probe;
    double gamma       = 0.95 * eps / slope;
    BasisMatrix out    = rotate_with(u, skew, gamma);
    for (int i = 0; i < 50 && subspace_error(u, out) > eps; ++i)
    {
        gamma *= 0.98;
        out = rotate_with(u, skew, gamma);
    }
    return out;
}

struct ControlRun
{
    Index trial        = 0;
    std::uint64_t seed = 0;
    Index detections   = 0;
    double max_statistic = 0.0;
};

struct ControlReport
{
    std::vector<ControlRun> runs;
    Index clean_runs = 0;
    bool passed      = false;
};

///
/// Stationary stream, tracker started in detect mode from an `eps`-accurate
/// frozen subspace, `batches` mini-batches per run.
///
inline ControlRun control_trial(const ExperimentConfig& cfg, Index trial)
{
    const SynthConfig s     = trial_synth(cfg, trial);
    const ChangeSchedule sc = make_change_schedule(s.n, s.r, cfg.pst.control_batches * cfg.tracker.alpha,
                                                   {}, {}, s.seed);
    const BasisMatrix frozen =
        perturb_basis(sc.subspaces.front(), cfg.pst.control_eps, tagged_seed(s.seed, StreamTag::init));
    auto tracker = PhaselessSubspaceTracker::detecting_from(variant_config(cfg, "pst"), frozen);
    ControlRun out;
    out.trial = trial;
    out.seed  = s.seed;
    for (Index b = 0; b < cfg.pst.control_batches; ++b)
    {
        const Index b0 = b * cfg.tracker.alpha;
        const BatchRecord rec =
            tracker.push(stream_batch(sc, b0, cfg.tracker.alpha, s.m, s.seed));
        out.detections += rec.detected;
        if (!std::isnan(rec.statistic))
        {
            out.max_statistic = std::max(out.max_statistic, rec.statistic);
        }
        if (rec.detected)
        {
            // A detection resets the tracker to update mode; the run already failed.
            break;
        }
    }
    return out;
}

inline ControlReport run_control(const ExperimentConfig& cfg, double required_rate = 0.99)
{
    ControlReport rep;
    rep.runs = run_indexed<ControlRun>(cfg.trials, resolve_threads(cfg.threads),
                                       [&](Index t) { return control_trial(cfg, t); });
    for (const auto& r : rep.runs)
    {
        rep.clean_runs += r.detections == 0;
    }
    rep.passed = static_cast<double>(rep.clean_runs) >=
                 required_rate * static_cast<double>(cfg.trials);
    return rep;
}

inline void write_control_csv(std::ostream& os, const std::vector<ControlRun>& runs)
{
    full_precision(os) << "trial,seed,detections,max_statistic\n";
    for (const auto& r : runs)
    {
        os << r.trial << ',' << r.seed << ',' << r.detections << ',' << r.max_statistic << '\n';
    }
}

}  // namespace lrpr::harness
