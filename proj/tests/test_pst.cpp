#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace lrpr;

namespace
{

constexpr Index kN     = 300;
constexpr Index kR     = 2;
constexpr Index kM     = 100;
constexpr Index kAlpha = 250;

TrackerConfig demo_tracker(bool pst_all)
{
    TrackerConfig cfg;
    cfg.alpha   = kAlpha;
    cfg.rank    = kR;
    cfg.pst_all = pst_all;
    return cfg;
}

struct StreamRun
{
    std::vector<BatchRecord> records;
    TrackerState state;
};

StreamRun run_stream(const ChangeSchedule& s, const TrackerConfig& cfg, Index m,
                     std::uint64_t seed, TrackerConfig const* check = nullptr)
{
    PhaselessSubspaceTracker tracker(cfg);
    StreamRun out;
    for (Index start = 0; start + cfg.alpha <= s.q_full; start += cfg.alpha)
    {
        const MeasurementBatch b = stream_batch(s, start, cfg.alpha, m, seed);
        const BasisMatrix& truth = s.basis_at(start + cfg.alpha - 1);
        out.records.push_back(tracker.push(b, &truth));
        if (check)
        {
            EXPECT_EQ(tracker.state().invariant_violation(*check), "") << "batch " << start;
        }
    }
    out.state = tracker.state();
    return out;
}

/// λ_max − λ_{n−r} of the explicitly projected matrix.
double projected_gap(const Matrix& y, const BasisMatrix& u)
{
    const Index n  = y.rows();
    const Matrix p = Matrix::Identity(n, n) - u.mat() * u.mat().transpose();
    const Vector ev = symmetric_spectrum(p * y * p, false).values;
    return ev(0) - ev(n - u.cols() - 1);
}

}  // namespace

TEST(DetectStatistic, FullSpaceBasisGivesZero)
{
    const ChangeSchedule s   = make_change_schedule(4, 4, 10, {}, {}, 1);
    const MeasurementBatch b = stream_batch(s, 0, 10, 20, 2);
    const BasisMatrix full   = random_basis(4, 4, 3);
    EXPECT_EQ(detect_statistic(b, full).value, 0.0);
    EXPECT_EQ(detect_subspace_shift(b, full).value, 0.0);
}

TEST(DetectStatistic, EigenGapMatchesExplicitProjection)
{
    const ChangeSchedule s   = make_change_schedule(30, 2, 60, {}, {}, 4);
    const MeasurementBatch b = stream_batch(s, 0, 60, 40, 5);
    const BasisMatrix prev   = random_basis(30, 2, 6);
    const double expect      = projected_gap(build_yu(b).mat, prev);
    EXPECT_NEAR(detect_statistic(b, prev).value, expect, 1e-10 * std::abs(expect));
}

TEST(DetectStatistic, InvariantToRotationOfFrozenBasis)
{
    const ChangeSchedule s   = make_change_schedule(40, 3, 80, {}, {}, 7);
    const MeasurementBatch b = stream_batch(s, 0, 80, 30, 8);
    const BasisMatrix prev   = random_basis(40, 3, 9);
    const Matrix rot         = random_basis(3, 3, 10).mat();
    const BasisMatrix turned(prev.mat() * rot);
    EXPECT_NEAR(detect_statistic(b, prev).value, detect_statistic(b, turned).value, 1e-10);
    EXPECT_NEAR(detect_subspace_shift(b, prev).value, detect_subspace_shift(b, turned).value,
                1e-10);
}

TEST(DetectStatistic, DegenerateBatchIsFlagged)
{
    const MeasurementBatch b({Matrix(Matrix::Identity(3, 2))}, {Vector::Zero(2)});
    const BasisMatrix prev = random_basis(3, 1, 1);
    EXPECT_TRUE(detect_statistic(b, prev).degenerate);
    EXPECT_TRUE(detect_subspace_shift(b, prev).degenerate);
    EXPECT_EQ(detect_subspace_shift(b, prev).value, 0.0);
}

TEST(DetectStatistic, ShiftSeparatesChangeFromNoChange)
{
    // One mini-batch at the demo sizes (n=300, r=2, m=100, alpha=250) on either side of an SE = 0.8 change.
    const ChangeSchedule s = make_change_schedule(kN, kR, 2 * kAlpha, {kAlpha}, {0.8}, 11);
    const MeasurementBatch same  = stream_batch(s, 0, kAlpha, kM, 12);
    const MeasurementBatch moved = stream_batch(s, kAlpha, kAlpha, kM, 12);
    const double quiet = detect_subspace_shift(same, s.subspaces[0]).value;
    const double loud  = detect_subspace_shift(moved, s.subspaces[0]).value;
    EXPECT_LT(quiet, 0.6);
    EXPECT_GT(loud, 0.6);
}

TEST(DetectStatistic, EigenGapGrowsAfterChange)
{
    const ChangeSchedule s = make_change_schedule(kN, kR, 10 * kAlpha, {5 * kAlpha}, {0.8}, 13);
    double before = 0.0;
    double after  = 0.0;
    for (Index i = 0; i < 5; ++i)
    {
        before += detect_statistic(stream_batch(s, i * kAlpha, kAlpha, kM, 14), s.subspaces[0]).value;
        after += detect_statistic(stream_batch(s, (5 + i) * kAlpha, kAlpha, kM, 14), s.subspaces[0]).value;
    }
    EXPECT_GT(after, before);
}

TEST(TrackerState, InvariantViolationsAreReported)
{
    const TrackerConfig cfg = demo_tracker(false);
    TrackerState st;
    EXPECT_EQ(st.invariant_violation(cfg), "");
    st.mode = TrackerMode::detect;
    EXPECT_NE(st.invariant_violation(cfg), "");
    st.ell    = cfg.t_epochs;
    st.prev_u = random_basis(5, 2, 1);
    EXPECT_EQ(st.invariant_violation(cfg), "");
    st.khat = {0, 0};
    st.j    = 1;
    EXPECT_NE(st.invariant_violation(cfg), "");
}

TEST(TrackerConfig, RejectsInvalidValues)
{
    TrackerConfig cfg;
    cfg.alpha = 1;
    cfg.rank  = 2;
    EXPECT_THROW(PhaselessSubspaceTracker{cfg}, Error);
    cfg.alpha     = 10;
    cfg.omega_det = 0.0;
    EXPECT_THROW(PhaselessSubspaceTracker{cfg}, Error);
}

TEST(Tracker, BatchesMustArriveInOrder)
{
    const ChangeSchedule s = make_change_schedule(20, 1, 40, {}, {}, 1);
    TrackerConfig cfg;
    cfg.alpha = 20;
    cfg.rank  = 1;
    PhaselessSubspaceTracker tracker(cfg);
    tracker.push(stream_batch(s, 20, 20, 30, 2));
    EXPECT_THROW(tracker.push(stream_batch(s, 0, 20, 30, 2)), Error);
}

TEST(Tracker, StationaryStreamDecaysThenDetects)
{
    const TrackerConfig cfg = demo_tracker(false);
    const ChangeSchedule s  = make_change_schedule(kN, kR, 12 * kAlpha, {}, {}, 21);
    const StreamRun run     = run_stream(s, cfg, kM, 22, &cfg);
    ASSERT_EQ(run.records.size(), 12u);
    for (Index e = 0; e < cfg.t_epochs; ++e)
    {
        EXPECT_EQ(run.records[static_cast<std::size_t>(e)].mode_in, TrackerMode::update);
    }
    EXPECT_EQ(run.records[static_cast<std::size_t>(cfg.t_epochs)].mode_in, TrackerMode::detect);
    EXPECT_LT(run.records[static_cast<std::size_t>(cfg.t_epochs) - 1].se,
              0.1 * run.records[0].se);
    // Basic PST does not move the estimate in detect mode.
    EXPECT_EQ(run.records.back().se, run.records[static_cast<std::size_t>(cfg.t_epochs) - 1].se);
    EXPECT_EQ(run.state.khat.size(), 1u);
}

TEST(Tracker, LargeChangeDetectedAndTracked)
{
    const Index change = 2992;
    const ChangeSchedule s = make_change_schedule(kN, kR, 6000, {change}, {0.8}, 31);
    for (bool all : {false, true})
    {
        const TrackerConfig cfg = demo_tracker(all);
        const StreamRun run     = run_stream(s, cfg, kM, 32, &cfg);
        ASSERT_EQ(run.state.khat.size(), 2u) << (all ? "pst-all" : "pst");
        EXPECT_GE(run.state.khat[1] + kAlpha, change);
        EXPECT_LE(run.state.khat[1] - change, 2 * kAlpha);
        EXPECT_LT(run.records.back().se, 1e-3);
    }
}

TEST(Tracker, SmallChangeOnlyTrackedByUpdatingVariant)
{
    const ChangeSchedule s = make_change_schedule(kN, kR, 6000, {2992}, {0.01}, 41);
    const TrackerConfig basic = demo_tracker(false);
    const StreamRun b         = run_stream(s, basic, kM, 42, &basic);
    EXPECT_EQ(b.state.khat.size(), 1u);
    EXPECT_GT(b.records.back().se, 3e-3);
    EXPECT_LT(b.records.back().se, 3e-2);

    const TrackerConfig all = demo_tracker(true);
    const StreamRun a       = run_stream(s, all, kM, 42, &all);
    EXPECT_LT(a.records.back().se, 1e-3);
}

TEST(Tracker, AccurateFrozenBasisRaisesNoAlarm)
{
    const ChangeSchedule s = make_change_schedule(kN, kR, 20 * kAlpha, {}, {}, 51);
    const BasisMatrix frozen = rotate_subspace(s.subspaces[0], 1e-5, 52);
    ASSERT_LE(subspace_error(frozen, s.subspaces[0]), 1e-3);
    auto tracker = PhaselessSubspaceTracker::detecting_from(demo_tracker(false), frozen);
    for (Index i = 0; i < 20; ++i)
    {
        const BatchRecord rec = tracker.push(stream_batch(s, i * kAlpha, kAlpha, kM, 53));
        EXPECT_FALSE(rec.detected) << "batch " << i << " statistic " << rec.statistic;
    }
}

TEST(OfflineSmooth, SingleExactSegmentRecoversColumns)
{
    const ChangeSchedule s   = make_change_schedule(40, 2, 30, {}, {}, 61);
    Matrix truth;
    const MeasurementBatch b = stream_batch(s, 0, 30, 30, 62, &truth);
    const OfflineResult res  = offline_smooth({b}, {0}, {s.subspaces[0]});
    EXPECT_TRUE(res.warnings.empty());
    EXPECT_LE(relative_mat_dist(res.xhat, truth), 1e-6);
}

TEST(OfflineSmooth, StraddlingColumnsUseUnionBasis)
{
    // True change at 20 but detected at 30: columns 20..29 belong to the
    // second subspace while still assigned to the first segment.
    const ChangeSchedule s   = make_change_schedule(40, 2, 50, {20}, {0.8}, 63);
    Matrix truth;
    const MeasurementBatch b = stream_batch(s, 0, 50, 80, 64, &truth);
    const OfflineResult res  = offline_smooth({b}, {0, 30}, {s.subspaces[0], s.subspaces[1]});
    for (Index k = 20; k < 30; ++k)
    {
        EXPECT_LE(phase_dist(truth.col(k), res.xhat.col(k)), 1e-4 * truth.col(k).norm())
            << "column " << k;
    }
}

TEST(OfflineSmooth, IdenticalSegmentsDeduplicate)
{
    const BasisMatrix u = random_basis(10, 2, 65);
    Matrix both(10, 4);
    both << u.mat(), u.mat();
    EXPECT_EQ(span_basis(both, 1e-8).cols(), 2);
}

TEST(OfflineSmooth, EmptySegmentWarns)
{
    const ChangeSchedule s   = make_change_schedule(20, 1, 20, {}, {}, 66);
    const MeasurementBatch b = stream_batch(s, 0, 20, 30, 67);
    const OfflineResult res  = offline_smooth({b}, {0, 100}, {s.subspaces[0], s.subspaces[0]});
    ASSERT_EQ(res.warnings.size(), 1u);
    EXPECT_NE(res.warnings[0].find("segment 1"), std::string::npos);
}
