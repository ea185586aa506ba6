///
/// \file rwf.hpp
///
/// Reshaped Wirtinger Flow for real-valued phase retrieval
/// `y = |Aᵀx|`, used per column inside the low-rank solver and as the
/// unstructured baseline.
///
#pragma once

#include "core.hpp"

#include <optional>

namespace lrpr
{

struct RwfConfig
{
    Index max_iters         = 200;
    double step_size        = 0.8;
    double init_trunc       = 5.0;  // upper truncation multiplier
    double init_trunc_lower = 1.0;  // lower truncation multiplier
    std::optional<Vector> warm_start;

    void validate() const
    {
        if (!(step_size > 0.0 && step_size < 2.0))
        {
            throw Error("RwfConfig: step_size must lie in (0, 2)");
        }
        if (max_iters < 0)
        {
            throw Error("RwfConfig: max_iters must be >= 0");
        }
        if (!(init_trunc > 0.0) || init_trunc_lower < 0.0 || init_trunc_lower >= init_trunc)
        {
            throw Error("RwfConfig: need 0 <= init_trunc_lower < init_trunc");
        }
    }
};

struct RwfResult
{
    Vector x;
    bool degenerate = false;
    Index iterations = 0;
};

namespace detail
{
inline constexpr Index kPowerIters   = 100;
inline constexpr double kPowerTol    = 1e-8;
inline constexpr Index kExplicitDim  = 32;
}  // namespace detail

///
/// Truncated spectral initializer: `λ₀ v` with `v` the top eigenvector of
/// `(1/m) Σ y_i a_i a_iᵀ 1{lower · ρ < y_i ≤ upper · ρ}` and
/// `λ₀ = sqrt(mean(y²))`, where `ρ = md · mean(y) / Σ_i ‖a_i‖₁` is the
/// amplitude-based norm estimate. Power iteration starts at e₁.
///
inline Vector rwf_init(const Vector& y, const Matrix& a, const RwfConfig& cfg = {})
{
    const Index d = a.rows();
    const Index m = a.cols();
    if (y.size() != m)
    {
        throw DimensionMismatch("rwf_init: y length must match design columns");
    }
    if (cfg.warm_start)
    {
        if (cfg.warm_start->size() != d)
        {
            throw DimensionMismatch("rwf_init: warm start length mismatch");
        }
        return *cfg.warm_start;
    }
    if (m < 1 || d < 1)
    {
        throw Error("rwf_init: empty problem");
    }
    const double mean_y = y.mean();
    if (!(mean_y > 0.0))
    {
        return Vector::Zero(d);
    }
    const double abs_sum = a.cwiseAbs().sum();
    const double rho =
        abs_sum > 0.0 ? static_cast<double>(m * d) * mean_y / abs_sum : mean_y;
    const double hi = cfg.init_trunc * rho;
    const double lo = cfg.init_trunc_lower * rho;
    Vector w(m);
    for (Index i = 0; i < m; ++i)
    {
        w(i) = (y(i) > lo && y(i) <= hi) ? y(i) / static_cast<double>(m) : 0.0;
    }

    Vector v = Vector::Zero(d);
    v(0)     = 1.0;
    if (d > 1)
    {
        Matrix explicit_op;
        if (d <= detail::kExplicitDim)
        {
            explicit_op = a * w.asDiagonal() * a.transpose();
        }
        for (Index it = 0; it < detail::kPowerIters; ++it)
        {
            Vector next = d <= detail::kExplicitDim
                              ? Vector(explicit_op * v)
                              : Vector(a * w.cwiseProduct(a.transpose() * v));
            const double nrm = next.norm();
            if (!(nrm > 0.0))
            {
                break;
            }
            next /= nrm;
            const double change = (next - v).norm();
            v                   = std::move(next);
            if (change < detail::kPowerTol)
            {
                break;
            }
        }
    }
    return std::sqrt(y.squaredNorm() / static_cast<double>(m)) * v;
}

/// Reshaped amplitude loss `(1/2m) Σ (a_iᵀx − y_i sign(a_iᵀx))²`.
inline double amplitude_loss(const Vector& x, const Vector& y, const Matrix& a)
{
    const Vector z = a.transpose() * x;
    double acc     = 0.0;
    for (Index i = 0; i < z.size(); ++i)
    {
        const double e = z(i) - y(i) * sign_of(z(i));
        acc += e * e;
    }
    return acc / (2.0 * static_cast<double>(z.size()));
}

/// One gradient step `x − (μ/m) Σ (a_iᵀx − y_i sign(a_iᵀx)) a_i`.
inline Vector rwf_step(const Vector& x, const Vector& y, const Matrix& a, double step_size)
{
    Vector resid = a.transpose() * x;
    for (Index i = 0; i < resid.size(); ++i)
    {
        resid(i) -= y(i) * sign_of(resid(i));
    }
    return x - (step_size / static_cast<double>(a.cols())) * (a * resid);
}

///
/// Initialization followed by `cfg.max_iters` gradient steps. A zero
/// initializer (all-zero observations) is returned unchanged and flagged.
///
inline RwfResult rwf_solve(const Vector& y, const Matrix& a, const RwfConfig& cfg = {})
{
    cfg.validate();
    RwfResult out;
    out.x = rwf_init(y, a, cfg);
    if (out.x.isZero(0.0))
    {
        out.degenerate = true;
        return out;
    }
    for (Index it = 0; it < cfg.max_iters; ++it)
    {
        out.x = rwf_step(out.x, y, a, cfg.step_size);
    }
    out.iterations = cfg.max_iters;
    return out;
}

}  // namespace lrpr
