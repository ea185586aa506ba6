#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace lrpr;
using lrpr::testing::gaussian_vector;

namespace
{

struct Instance
{
    Vector x;
    Matrix a;
    Vector y;
};

Instance make_instance(Index d, Index m, std::uint64_t seed)
{
    Instance in;
    in.x = gaussian_vector(d, seed);
    GaussianStream rng(seed, 77);
    in.a = rng.matrix(d, m);
    in.y = (in.a.transpose() * in.x).cwiseAbs();
    return in;
}

}  // namespace

TEST(RwfInit, ZeroObservationsGiveZero)
{
    const Instance in = make_instance(3, 20, 1);
    EXPECT_TRUE(rwf_init(Vector::Zero(20), in.a).isZero(0.0));
    const RwfResult res = rwf_solve(Vector::Zero(20), in.a);
    EXPECT_TRUE(res.degenerate);
    EXPECT_TRUE(res.x.isZero(0.0));
}

TEST(RwfInit, ScalarNormEstimateMonteCarlo)
{
    const Instance in = make_instance(1, 100000, 2);
    const Vector x0   = rwf_init(in.y, in.a);
    EXPECT_NEAR(x0(0) * x0(0) / (in.x(0) * in.x(0)), 1.0, 0.05);
}

TEST(RwfInit, WarmStartPassesThrough)
{
    const Instance in = make_instance(4, 30, 3);
    RwfConfig cfg;
    cfg.warm_start = gaussian_vector(4, 99);
    EXPECT_EQ(rwf_init(in.y, in.a, cfg), *cfg.warm_start);
}

TEST(RwfInit, AlignsWithSignalWhenWellSampled)
{
    const Instance in = make_instance(10, 2000, 4);
    const Vector x0   = rwf_init(in.y, in.a);
    EXPECT_LT(phase_dist(in.x, x0) / in.x.norm(), 0.3);
}

TEST(RwfStep, TruthAndNegationAreFixedPoints)
{
    const Instance in = make_instance(10, 200, 5);
    EXPECT_LT((rwf_step(in.x, in.y, in.a, 0.8) - in.x).norm(), 1e-12 * in.x.norm());
    EXPECT_LT((rwf_step(-in.x, in.y, in.a, 0.8) + in.x).norm(), 1e-12 * in.x.norm());
}

TEST(RwfStep, StepFromPerturbedPointDecreasesLoss)
{
    int decreased = 0;
    for (std::uint64_t s = 0; s < 20; ++s)
    {
        const Instance in = make_instance(10, 200, 100 + s);
        const Vector x    = in.x + 0.1 * in.x.norm() * gaussian_vector(10, 500 + s).normalized();
        const double before = amplitude_loss(x, in.y, in.a);
        const double after  = amplitude_loss(rwf_step(x, in.y, in.a, 0.8), in.y, in.a);
        decreased += after < before;
    }
    EXPECT_EQ(decreased, 20);
}

TEST(RwfSolve, SmallProblemRecoversInMostTrials)
{
    int ok = 0;
    RwfConfig cfg;
    cfg.max_iters = 200;
    for (std::uint64_t s = 0; s < 100; ++s)
    {
        const Instance in   = make_instance(4, 40, 1000 + s);
        const RwfResult res = rwf_solve(in.y, in.a, cfg);
        ok += phase_dist(in.x, res.x) <= 1e-6 * in.x.norm();
    }
    EXPECT_GE(ok, 90);
}

TEST(RwfSolve, SignFlipEquivariance)
{
    const Instance in = make_instance(6, 60, 7);
    RwfConfig cfg;
    cfg.max_iters  = 25;
    cfg.warm_start = gaussian_vector(6, 8);
    const Vector plus = rwf_solve(in.y, in.a, cfg).x;
    cfg.warm_start    = -*cfg.warm_start;
    const Vector minus = rwf_solve(in.y, in.a, cfg).x;
    EXPECT_EQ(plus, -minus);
}

TEST(RwfSolve, ScaleEquivariance)
{
    const Instance in = make_instance(6, 60, 9);
    RwfConfig cfg;
    cfg.max_iters   = 25;
    const Vector x1 = rwf_solve(in.y, in.a, cfg).x;
    const Vector x3 = rwf_solve(3.0 * in.y, in.a, cfg).x;
    EXPECT_LT((x3 - 3.0 * x1).norm(), 1e-12 * x3.norm());
}

TEST(RwfSolve, ZeroIterationsReturnsInitializer)
{
    const Instance in = make_instance(5, 50, 10);
    RwfConfig cfg;
    cfg.max_iters = 0;
    EXPECT_EQ(rwf_solve(in.y, in.a, cfg).x, rwf_init(in.y, in.a, cfg));
}

TEST(RwfConfig, RejectsBadParameters)
{
    RwfConfig cfg;
    cfg.step_size = 0.0;
    EXPECT_THROW(cfg.validate(), Error);
    cfg.step_size = 2.0;
    EXPECT_THROW(cfg.validate(), Error);
    cfg.step_size = 0.8;
    cfg.max_iters = -1;
    EXPECT_THROW(cfg.validate(), Error);
    cfg.max_iters        = 10;
    cfg.init_trunc_lower = cfg.init_trunc;
    EXPECT_THROW(cfg.validate(), Error);
}

// Full-dimension baseline: fails at m = 3n, works at m = 4n.
TEST(RwfSolve, FullDimensionSampleComplexity)
{
    const Index n = 600;
    RwfConfig cfg;
    cfg.max_iters = 1000;
    for (std::uint64_t s = 0; s < 2; ++s)
    {
        const Instance fail = make_instance(n, 3 * n, 40 + s);
        const Vector xf     = rwf_solve(fail.y, fail.a, cfg).x;
        EXPECT_GT(phase_dist(fail.x, xf) / fail.x.norm(), 0.1) << "m=3n seed " << s;

        const Instance work = make_instance(n, 4 * n, 60 + s);
        const Vector xw     = rwf_solve(work.y, work.a, cfg).x;
        EXPECT_LT(phase_dist(work.x, xw) / work.x.norm(), 1e-6) << "m=4n seed " << s;
    }
}
