///
/// \file cg.hpp
///
/// Matrix-free conjugate gradient for symmetric positive semidefinite
/// operators acting on dense matrices (Frobenius inner product).
///
#pragma once

#include "core.hpp"

#include <cmath>
#include <concepts>

namespace lrpr
{

template <typename Op>
concept MatrixOperator = requires(const Op& op, const Matrix& w) {
    { op(w) } -> std::convertible_to<Matrix>;
};

struct CgResult
{
    Index iterations      = 0;
    double rel_residual   = 0.0;
    bool converged        = false;
};

///
/// Solves `op(x) = rhs` starting from `x` (in/out). Stops when
/// `‖rhs − op(x)‖_F ≤ tol · ‖rhs‖_F` or after `max_iters` iterations.
///
template <MatrixOperator Op>
CgResult conjugate_gradient(const Op& op, const Matrix& rhs, Matrix& x, double tol,
                            Index max_iters)
{
    CgResult res;
    const double rhs_norm = rhs.norm();
    if (rhs_norm == 0.0)
    {
        x.setZero(rhs.rows(), rhs.cols());
        res.converged = true;
        return res;
    }
    if (x.rows() != rhs.rows() || x.cols() != rhs.cols())
    {
        x.setZero(rhs.rows(), rhs.cols());
    }

    Matrix r     = rhs - op(x);
    double rr    = r.squaredNorm();
    const double stop = tol * rhs_norm;
    res.rel_residual = std::sqrt(rr) / rhs_norm;
    if (std::sqrt(rr) <= stop)
    {
        res.converged = true;
        return res;
    }
    Matrix p = r;
    for (Index it = 0; it < max_iters; ++it)
    {
        const Matrix ap  = op(p);
        const double pap = (p.array() * ap.array()).sum();
        if (!(pap > 0.0))
        {
            break;
        }
        const double alpha = rr / pap;
        x.noalias() += alpha * p;
        r.noalias() -= alpha * ap;
        const double rr_new = r.squaredNorm();
        res.iterations      = it + 1;
        res.rel_residual    = std::sqrt(rr_new) / rhs_norm;
        if (std::sqrt(rr_new) <= stop)
        {
            res.converged = true;
            return res;
        }
        p  = r + (rr_new / rr) * p;
        rr = rr_new;
    }
    return res;
}

}  // namespace lrpr
