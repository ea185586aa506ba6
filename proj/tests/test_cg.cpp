#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace lrpr;

namespace
{

/// Dense SPD operator acting on n x r blocks through vec().
struct DenseOp
{
    Matrix k;
    Index rows;

    Matrix operator()(const Matrix& w) const
    {
        const Vector v = k * Eigen::Map<const Vector>(w.data(), w.size());
        return Eigen::Map<const Matrix>(v.data(), rows, w.cols());
    }
};

DenseOp spd_operator(Index rows, Index cols, std::uint64_t seed, double shift)
{
    GaussianStream rng(seed);
    const Matrix g = rng.matrix(rows * cols, rows * cols);
    return {g * g.transpose() / static_cast<double>(rows * cols) +
                shift * Matrix::Identity(rows * cols, rows * cols),
            rows};
}

}  // namespace

TEST(ConjugateGradient, MatchesDirectSolve)
{
    const DenseOp op = spd_operator(6, 3, 1, 0.5);
    GaussianStream rng(2);
    const Matrix rhs = rng.matrix(6, 3);
    Matrix x;
    const CgResult res = conjugate_gradient(op, rhs, x, 1e-12, 200);
    EXPECT_TRUE(res.converged);
    const Vector direct = op.k.ldlt().solve(Eigen::Map<const Vector>(rhs.data(), rhs.size()));
    const Matrix expect = Eigen::Map<const Matrix>(direct.data(), 6, 3);
    EXPECT_LT(lrpr::testing::relative_error(x, expect), 1e-10);
}

TEST(ConjugateGradient, ZeroRightHandSide)
{
    const DenseOp op = spd_operator(4, 2, 3, 1.0);
    Matrix x         = Matrix::Ones(4, 2);
    const CgResult res = conjugate_gradient(op, Matrix::Zero(4, 2), x, 1e-10, 10);
    EXPECT_TRUE(res.converged);
    EXPECT_TRUE(x.isZero(0.0));
}

TEST(ConjugateGradient, ExactWarmStartNeedsNoIterations)
{
    const DenseOp op = spd_operator(5, 2, 4, 1.0);
    GaussianStream rng(5);
    Matrix x         = rng.matrix(5, 2);
    const Matrix rhs = op(x);
    const CgResult res = conjugate_gradient(op, rhs, x, 1e-10, 10);
    EXPECT_TRUE(res.converged);
    EXPECT_EQ(res.iterations, 0);
}

TEST(ConjugateGradient, IterationCapIsReported)
{
    const DenseOp op = spd_operator(10, 3, 6, 1e-3);
    GaussianStream rng(7);
    Matrix x;
    const CgResult res = conjugate_gradient(op, rng.matrix(10, 3), x, 1e-14, 1);
    EXPECT_FALSE(res.converged);
    EXPECT_EQ(res.iterations, 1);
    EXPECT_GT(res.rel_residual, 1e-14);
}

TEST(ConjugateGradient, ResidualDecreasesWithIterations)
{
    const DenseOp op = spd_operator(8, 2, 8, 0.1);
    GaussianStream rng(9);
    const Matrix rhs = rng.matrix(8, 2);
    double prev      = 1.0;
    for (Index iters : {1, 4, 8, 16})
    {
        Matrix x;
        const CgResult res = conjugate_gradient(op, rhs, x, 1e-15, iters);
        const double resid = (rhs - op(x)).norm() / rhs.norm();
        EXPECT_LE(resid, prev * (1.0 + 1e-9)) << iters;
        EXPECT_NEAR(res.rel_residual, resid, 1e-8);
        prev = resid;
    }
}
