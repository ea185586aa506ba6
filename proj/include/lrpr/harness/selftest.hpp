///
/// \file selftest.hpp
///
/// Invariant suite behind the `selftest` command: property checks across
/// every module on seeded random instances. Each check returns an empty
/// string on success or a description of the first violation.
///
#pragma once

#include "../altmin.hpp"
#include "../pst.hpp"
#include "../rwf.hpp"
#include "../specinit.hpp"
#include "../synth.hpp"
#include "experiments.hpp"

#include <functional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace lrpr::harness
{

struct CheckResult
{
    std::string name;
    bool passed = false;
    std::string detail;
};

struct SelfCheck
{
    std::string name;
    std::function<std::string()> run;
};

namespace selftest_detail
{
inline std::string fail(const std::string& what, double value)
{
    std::ostringstream os;
    os << what << " (value " << value << ")";
    return os.str();
}

inline double frob_inner(const Matrix& a, const Matrix& b) { return (a.array() * b.array()).sum(); }

/// Measurement batch of a planted low-rank matrix.
inline MeasurementBatch planted(Index n, Index q, Index r, Index m, std::uint64_t seed,
                                GroundTruth* gt_out = nullptr)
{
    SynthConfig s;
    s.n    = n;
    s.q    = q;
    s.r    = r;
    s.m    = m;
    s.seed = seed;
    GroundTruth gt = gen_ground_truth(s);
    MeasurementBatch b = gen_measurements(gt.xstar, m, seed);
    if (gt_out)
    {
        *gt_out = std::move(gt);
    }
    return b;
}

/// CSV text with the named column removed.
inline std::string drop_column(const std::string& csv, const std::string& column)
{
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    std::vector<std::string> header;
    {
        std::istringstream hs(line);
        std::string cell;
        while (std::getline(hs, cell, ','))
        {
            header.push_back(cell);
        }
    }
    const auto skip = std::find(header.begin(), header.end(), column) - header.begin();
    std::string out;
    auto emit = [&](const std::string& row) {
        std::istringstream rs(row);
        std::string cell;
        std::ptrdiff_t i = 0;
        while (std::getline(rs, cell, ','))
        {
            if (i++ != skip)
            {
                out += cell + ',';
            }
        }
        out += '\n';
    };
    emit(line);
    while (std::getline(in, line))
    {
        emit(line);
    }
    return out;
}
}  // namespace selftest_detail

inline std::vector<SelfCheck> selftest_checks()
{
    using namespace selftest_detail;
    std::vector<SelfCheck> checks;

    // ---- core ---------------------------------------------------------------
    checks.push_back({"subspace_error_range", [] {
        for (std::uint64_t s = 0; s < 200; ++s)
        {
            const BasisMatrix a = random_basis(10, 3, 2 * s);
            const BasisMatrix b = random_basis(10, 3, 2 * s + 1);
            if (subspace_error(a, a) > 1e-12)
            {
                return fail("SE(U, U) not zero", subspace_error(a, a));
            }
            const double se = subspace_error(a, b);
            if (se < 0.0 || se > 1.0 + 1e-12)
            {
                return fail("SE outside [0, 1]", se);
            }
        }
        return std::string{};
    }});

    checks.push_back({"phase_dist_metric", [] {
        GaussianStream rng(11);
        for (int t = 0; t < 200; ++t)
        {
            const Vector x = rng.matrix(6, 1);
            const Vector y = rng.matrix(6, 1);
            const Vector z = rng.matrix(6, 1);
            if (phase_dist(x, x) != 0.0 || phase_dist(x, -x) != 0.0)
            {
                return std::string("phase_dist(x, ±x) != 0");
            }
            const double lhs = phase_dist(x, z);
            const double rhs = phase_dist(x, y) + phase_dist(y, z);
            if (lhs > rhs + 1e-10)
            {
                return fail("triangle inequality violated", lhs - rhs);
            }
        }
        return std::string{};
    }});

    checks.push_back({"mat_dist_definition", [] {
        GaussianStream rng(12);
        const Matrix a = rng.matrix(7, 9);
        Matrix b       = rng.matrix(7, 9);
        b.col(2)       = -a.col(2);
        double acc     = 0.0;
        for (Index k = 0; k < a.cols(); ++k)
        {
            const double d = phase_dist(a.col(k), b.col(k));
            acc += d * d;
        }
        const double md = mat_dist(b, a);
        if (std::abs(md * md - acc) > 1e-12 * acc)
        {
            return fail("mat_dist² differs from Σ phase_dist²", md * md - acc);
        }
        return std::string{};
    }});

    checks.push_back({"qr_reconstruction", [] {
        GaussianStream rng(13);
        for (int t = 0; t < 50; ++t)
        {
            const Matrix m     = rng.matrix(12, 5);
            const QrFactors f  = orthonormalize(m);
            const double recon = (f.q.mat() * f.r - m).norm() / m.norm();
            if (recon > 1e-10)
            {
                return fail("QR != input", recon);
            }
            if ((f.r.diagonal().array() <= 0.0).any())
            {
                return std::string("R diagonal not positive");
            }
            const QrFactors again = orthonormalize(f.q.mat());
            if ((again.q.mat() - f.q.mat()).norm() > 1e-10)
            {
                return fail("orthonormalize not idempotent", (again.q.mat() - f.q.mat()).norm());
            }
        }
        return std::string{};
    }});

    // ---- synth --------------------------------------------------------------
    checks.push_back({"ground_truth_invariants", [] {
        for (std::uint64_t s = 1; s <= 10; ++s)
        {
            SynthConfig c;
            c.n    = 30;
            c.q    = 50;
            c.r    = 1 + static_cast<Index>(s % 4);
            c.seed = s;
            const GroundTruth gt = gen_ground_truth(c);
            for (Index i = 0; i < gt.rank(); ++i)
            {
                if (!(gt.sigma(i) > 0.0) || (i > 0 && gt.sigma(i) > gt.sigma(i - 1)))
                {
                    return std::string("sigma not positive nonincreasing");
                }
            }
            const Matrix bbt = gt.bstar * gt.bstar.transpose();
            const double dev = (bbt - Matrix::Identity(gt.rank(), gt.rank())).cwiseAbs().maxCoeff();
            if (dev > 1e-10)
            {
                return fail("B* rows not orthonormal", dev);
            }
            if (gt.mu < 1.0 - 1e-12)
            {
                return fail("mu below 1", gt.mu);
            }
            const Matrix x = gt.ustar.mat() * gt.sigma.asDiagonal() * gt.bstar;
            if ((x - gt.xstar).norm() > 1e-10 * gt.xstar.norm())
            {
                return std::string("X* != U* Σ* B*");
            }
        }
        return std::string{};
    }});

    checks.push_back({"design_independence", [] {
        const Matrix a0 = gaussian_design(100, 100, 5, 0);
        const Matrix a1 = gaussian_design(100, 100, 5, 1);
        double sum = 0.0;
        Index pairs = 0;
        for (Index i = 0; i < a0.cols(); ++i)
        {
            for (Index j = i + 1; j < a0.cols(); ++j)
            {
                sum += a0.col(i).dot(a0.col(j)) / (a0.col(i).norm() * a0.col(j).norm());
                ++pairs;
            }
        }
        const double mean_corr = sum / static_cast<double>(pairs);
        if (std::abs(mean_corr) > 0.01)
        {
            return fail("mean pairwise column correlation too large", mean_corr);
        }
        const double cross = (a0.array() * a1.array()).mean();
        if (std::abs(cross) > 0.05)
        {
            return fail("designs of different columns correlated", cross);
        }
        return std::string{};
    }});

    checks.push_back({"rotation_orthonormal", [] {
        const BasisMatrix u = random_basis(40, 3, 21);
        for (double g : {0.0, 1e-3, 0.05, 0.3})
        {
            const BasisMatrix v = rotate_subspace(u, g, 22);
            if (BasisMatrix::orthonormality_defect(v.mat()) > 1e-10)
            {
                return fail("rotated basis not orthonormal", g);
            }
        }
        return std::string{};
    }});

    checks.push_back({"split_partition", [] {
        for (Index t_outer : {Index{0}, Index{1}, Index{3}, Index{10}})
        {
            for (Index m_tot : {2 * t_outer + 1, 2 * t_outer + 7, Index{100}})
            {
                if (m_tot < 2 * t_outer + 1)
                {
                    continue;
                }
                const SamplePartition p = split_samples(m_tot, t_outer);
                std::vector<int> hits(static_cast<std::size_t>(m_tot), 0);
                auto mark = [&](const IndexRange& r) {
                    for (Index i = r.begin; i < r.begin + r.size; ++i)
                    {
                        ++hits[static_cast<std::size_t>(i)];
                    }
                };
                mark(p.init);
                for (const auto& b : p.blocks)
                {
                    mark(b);
                }
                if (std::any_of(hits.begin(), hits.end(), [](int h) { return h != 1; }))
                {
                    return fail("partition not disjoint and exhaustive", static_cast<double>(m_tot));
                }
            }
        }
        return std::string{};
    }});

    // ---- rwf ----------------------------------------------------------------
    checks.push_back({"rwf_sign_equivariance", [] {
        GaussianStream rng(31);
        const Matrix a = rng.matrix(8, 60);
        const Vector x = rng.matrix(8, 1);
        const Vector y = (a.transpose() * x).cwiseAbs();
        RwfConfig c;
        c.max_iters  = 40;
        c.warm_start = rng.matrix(8, 1);
        const Vector p = rwf_solve(y, a, c).x;
        c.warm_start   = -*c.warm_start;
        const Vector q = rwf_solve(y, a, c).x;
        if ((p + q).cwiseAbs().maxCoeff() != 0.0)
        {
            return fail("run from −x₀ is not the exact negation", (p + q).norm());
        }
        return std::string{};
    }});

    checks.push_back({"rwf_scale_equivariance", [] {
        GaussianStream rng(32);
        const Matrix a = rng.matrix(6, 80);
        const Vector x = rng.matrix(6, 1);
        const Vector y = (a.transpose() * x).cwiseAbs();
        RwfConfig c;
        c.max_iters    = 30;
        const Vector p = rwf_solve(y, a, c).x;
        const Vector q = rwf_solve(3.7 * y, a, c).x;
        const double rel = (q - 3.7 * p).norm() / (3.7 * p.norm());
        if (rel > 1e-10)
        {
            return fail("scaling y does not scale the estimate", rel);
        }
        return std::string{};
    }});

    checks.push_back({"rwf_fixed_point", [] {
        GaussianStream rng(33);
        const Matrix a = rng.matrix(10, 100);
        const Vector x = rng.matrix(10, 1);
        const Vector y = (a.transpose() * x).cwiseAbs();
        for (double s : {1.0, -1.0})
        {
            const Vector xs   = s * x;
            const double rel = (rwf_step(xs, y, a, 0.8) - xs).norm() / x.norm();
            if (rel > 1e-12)
            {
                return fail("truth is not a fixed point", rel);
            }
        }
        return std::string{};
    }});

    checks.push_back({"rwf_loss_decrease", [] {
        GaussianStream rng(34);
        double before = 0.0;
        double after  = 0.0;
        for (int t = 0; t < 50; ++t)
        {
            const Matrix a  = rng.matrix(10, 200);
            const Vector x  = rng.matrix(10, 1);
            const Vector y  = (a.transpose() * x).cwiseAbs();
            const Vector x0 = x + 0.3 * x.norm() / std::sqrt(10.0) * Vector(rng.matrix(10, 1));
            before += amplitude_loss(x0, y, a);
            after += amplitude_loss(rwf_step(x0, y, a, 0.8), y, a);
        }
        if (!(after < before))
        {
            return fail("mean amplitude loss did not decrease", after - before);
        }
        return std::string{};
    }});

    // ---- specinit -----------------------------------------------------------
    checks.push_back({"yu_symmetric_psd", [] {
        const MeasurementBatch b = planted(15, 30, 2, 40, 41);
        for (auto mode : {ThresholdMode::global, ThresholdMode::per_column})
        {
            const YuMatrix yu = build_yu(b, 9.0, mode);
            const double nrm  = yu.mat.norm();
            if ((yu.mat - yu.mat.transpose()).cwiseAbs().maxCoeff() > 1e-12 * nrm)
            {
                return std::string("Y_U not symmetric");
            }
            const double lmin = symmetric_spectrum(yu.mat, false).values.minCoeff();
            if (lmin < -1e-10 * nrm)
            {
                return fail("Y_U not PSD", lmin);
            }
        }
        return std::string{};
    }});

    checks.push_back({"yu_trace_monotone_in_cy", [] {
        const MeasurementBatch b = planted(15, 30, 2, 40, 42);
        double prev = -1.0;
        for (double cy : {0.5, 1.0, 2.0, 4.0, 9.0, 100.0})
        {
            const double tr = build_yu(b, cy).mat.trace();
            if (tr < prev)
            {
                return fail("trace(Y_U) decreased as c_y grew", cy);
            }
            prev = tr;
        }
        return std::string{};
    }});

    checks.push_back({"sandwich_order", [] {
        GroundTruth gt;
        const MeasurementBatch b = planted(12, 40, 2, 30, 43, &gt);
        for (double eps : {0.0, 0.05, 0.3})
        {
            const auto [lo, hi] = build_sandwich(b, gt, eps);
            const double lmin   = symmetric_spectrum(hi - lo, false).values.minCoeff();
            if (lmin < -1e-10 * hi.norm())
            {
                return fail("Y_+ − Y_− not PSD", lmin);
            }
        }
        return std::string{};
    }});

    checks.push_back({"threshold_rank_monotone", [] {
        const MeasurementBatch b = planted(20, 40, 3, 40, 44);
        const Vector ev          = yu_spectrum(build_yu(b), false).values;
        Index prev               = std::numeric_limits<Index>::max();
        for (double w = 0.01; w < 20.0; w *= 1.3)
        {
            const Index r = estimate_rank_threshold(ev, w);
            if (r > prev)
            {
                return fail("rank estimate increased with omega", w);
            }
            prev = r;
        }
        return std::string{};
    }});

    checks.push_back({"init_subspace_orthonormal", [] {
        const MeasurementBatch b = planted(25, 40, 3, 30, 45);
        const BasisMatrix u      = init_subspace(build_yu(b), 3);
        const double dev         = BasisMatrix::orthonormality_defect(u.mat());
        return dev > 1e-10 ? fail("init basis not orthonormal", dev) : std::string{};
    }});

    // ---- altmin -------------------------------------------------------------
    checks.push_back({"altmin_estimates_consistent", [] {
        GroundTruth gt;
        const MeasurementBatch b = planted(30, 60, 2, 30, 51, &gt);
        AltMinConfig c;
        c.t_outer = 10;
        const RecoveryResult res = altmin_lowrap(b, c, &gt);
        const double dev         = BasisMatrix::orthonormality_defect(res.uhat.mat());
        if (dev > 1e-10)
        {
            return fail("final U not orthonormal", dev);
        }
        const double rel = (res.uhat.mat() * res.bhat - res.xhat).norm() / res.xhat.norm();
        if (rel > 1e-10)
        {
            return fail("xhat != uhat·bhat", rel);
        }
        return std::string{};
    }});

    checks.push_back({"altmin_se_monotone", [] {
        Index pairs = 0;
        Index good  = 0;
        for (std::uint64_t s = 1; s <= 5; ++s)
        {
            GroundTruth gt;
            const MeasurementBatch b = planted(40, 80, 2, 40, 60 + s, &gt);
            AltMinConfig c;
            c.t_outer = 15;
            const RecoveryResult res = altmin_lowrap(b, c, &gt);
            if (res.status != RecoveryStatus::converged)
            {
                continue;
            }
            for (std::size_t t = 2; t < res.trace.size(); ++t)
            {
                ++pairs;
                good += res.trace[t].se <= res.trace[t - 1].se;
            }
        }
        if (pairs == 0)
        {
            return std::string("no converged trial to examine");
        }
        const double frac = static_cast<double>(good) / static_cast<double>(pairs);
        return frac < 0.9 ? fail("SE nonincreasing in too few iterations", frac) : std::string{};
    }});

    checks.push_back({"normal_operator_symmetric_psd", [] {
        const MeasurementBatch b = planted(12, 20, 3, 15, 71);
        GaussianStream rng(72);
        const Matrix bm = orthonormalize(rng.matrix(20, 3)).q.mat().transpose();
        const SubspaceNormalOperator op(b, bm);
        for (int t = 0; t < 20; ++t)
        {
            const Matrix w1 = rng.matrix(12, 3);
            const Matrix w2 = rng.matrix(12, 3);
            if (frob_inner(w1, op(w1)) < 0.0)
            {
                return std::string("operator not PSD");
            }
            const double l = frob_inner(w1, op(w2));
            const double r = frob_inner(op(w1), w2);
            if (std::abs(l - r) > 1e-8 * std::max(std::abs(l), 1.0))
            {
                return fail("operator not symmetric", l - r);
            }
        }
        return std::string{};
    }});

    checks.push_back({"b_sign_flip_span", [] {
        GroundTruth gt;
        const MeasurementBatch b = planted(15, 30, 2, 25, 73, &gt);
        const PhaseMatrix ph     = estimate_phases(gt.xstar, b);
        const UUpdate plus       = update_u(gt.bstar, ph, b);
        const UUpdate minus      = update_u(-gt.bstar, ph, b);
        const double se          = subspace_error(plus.u, minus.u);
        return se > 1e-10 ? fail("flipping B changed span(U)", se) : std::string{};
    }});

    // ---- pst ----------------------------------------------------------------
    checks.push_back({"detect_statistic_rotation_invariant", [] {
        const ChangeSchedule sc  = make_change_schedule(30, 2, 200, {100}, {0.5}, 81);
        const MeasurementBatch b = stream_batch(sc, 100, 60, 40, 81);
        const BasisMatrix& u     = sc.subspaces.front();
        const double th          = 0.7;
        Matrix rot(2, 2);
        rot << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
        const BasisMatrix ur(u.mat() * rot);
        const double d1 = detect_statistic(b, u).value - detect_statistic(b, ur).value;
        const double d2 = detect_subspace_shift(b, u).value - detect_subspace_shift(b, ur).value;
        if (std::abs(d1) > 1e-10 || std::abs(d2) > 1e-10)
        {
            return fail("statistic changed under right rotation", std::max(std::abs(d1), std::abs(d2)));
        }
        return std::string{};
    }});

    checks.push_back({"tracker_state_invariants", [] {
        TrackerConfig cfg;
        cfg.alpha    = 80;
        cfg.t_epochs = 3;
        cfg.rank     = 2;
        for (bool all : {false, true})
        {
            cfg.pst_all = all;
            const ChangeSchedule sc = make_change_schedule(40, 2, 1200, {640}, {0.8}, 82);
            PhaselessSubspaceTracker tr(cfg);
            for (Index b0 = 0; b0 + cfg.alpha <= sc.q_full; b0 += cfg.alpha)
            {
                tr.push(stream_batch(sc, b0, cfg.alpha, 60, 82));
                const std::string v = tr.state().invariant_violation(cfg);
                if (!v.empty())
                {
                    return v;
                }
            }
        }
        return std::string{};
    }});

    checks.push_back({"tracker_detection_delay", [] {
        ExperimentConfig cfg = default_config(ExperimentKind::pst_demo);
        cfg.pst.variants     = {"pst"};
        cfg.pst.q_full       = 4000;
        const PstTrial t     = pst_trial(cfg, 0);
        const DetectionSummary d =
            match_detections(t.variants[0].khat, cfg.pst.change_times, cfg.tracker.alpha);
        if (d.detected != 1 || d.false_alarms != 0)
        {
            return fail("change not detected exactly once", static_cast<double>(d.detected));
        }
        return d.max_delay > 2 * cfg.tracker.alpha
                   ? fail("detection delay above 2 alpha", static_cast<double>(d.max_delay))
                   : std::string{};
    }});

    checks.push_back({"tracker_no_false_detection", [] {
        ExperimentConfig cfg = default_config(ExperimentKind::pst_demo);
        for (Index t = 0; t < 3; ++t)
        {
            const ControlRun r = control_trial(cfg, t);
            if (r.detections > 0)
            {
                return fail("false detection on a stationary stream", r.max_statistic);
            }
        }
        return std::string{};
    }});

    // ---- harness ------------------------------------------------------------
    checks.push_back({"harness_determinism", [] {
        ExperimentConfig cfg = default_config(ExperimentKind::recover);
        cfg.synth.n          = 30;
        cfg.synth.q          = 40;
        cfg.synth.r          = 2;
        cfg.synth.m          = 30;
        cfg.altmin.t_outer   = 8;
        cfg.trials           = 4;
        cfg.keep_best        = 3;
        auto render = [&](Index threads) {
            cfg.threads          = threads;
            const RecoverReport r = run_recover(cfg);
            std::ostringstream agg;
            std::ostringstream per;
            write_aggregate_csv(agg, r.aggregate);
            write_trials_csv(per, r.trials);
            return drop_column(agg.str(), "mean_elapsed_s") + drop_column(per.str(), "elapsed_s");
        };
        return render(1) == render(3) ? std::string{}
                                      : std::string("output depends on thread count");
    }});

    checks.push_back({"aggregate_single_trial", [] {
        TrialRecord t;
        t.rows = {{0, 0.1, 0.5, 0.4, 3}, {1, 0.2, 0.05, 0.04, 2}};
        const auto agg = aggregate_best({t}, 1);
        if (agg.size() != 2 || agg[1].mean_matdist_rel != 0.04 || agg[0].mean_se != 0.5 ||
            agg[1].mean_elapsed_s != 0.2 || agg[1].n_kept != 1)
        {
            return std::string("aggregate of one trial differs from the trial");
        }
        return std::string{};
    }});

    return checks;
}

/// Run every check, logging one line each when `log` is given.
inline std::vector<CheckResult> run_selftest(std::ostream* log = nullptr)
{
    std::vector<CheckResult> out;
    for (const auto& c : selftest_checks())
    {
        CheckResult r;
        r.name = c.name;
        try
        {
            r.detail = c.run();
            r.passed = r.detail.empty();
        }
        catch (const std::exception& e)
        {
            r.detail = std::string("exception: ") + e.what();
        }
        if (log)
        {
            *log << (r.passed ? "[PASS] " : "[FAIL] ") << r.name;
            if (!r.passed)
            {
                *log << ": " << r.detail;
            }
            *log << '\n' << std::flush;
        }
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace lrpr::harness
