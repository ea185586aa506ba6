#pragma once

#include <lrpr/lrpr.hpp>

#include <vector>

namespace lrpr::testing
{

inline Vector gaussian_vector(Index n, std::uint64_t seed)
{
    GaussianStream rng(seed);
    return rng.matrix(n, 1).col(0);
}

/// Smallest eigenvalue of the symmetric part of `m`.
inline double min_eigenvalue(const Matrix& m)
{
    const Matrix sym = 0.5 * (m + m.transpose());
    return symmetric_spectrum(sym, false).values.tail(1)(0);
}

/// `lo ⪯ hi` up to a relative tolerance.
inline bool loewner_leq(const Matrix& lo, const Matrix& hi, double rel_tol = 1e-10)
{
    const double scale = std::max(lo.norm(), hi.norm());
    return min_eigenvalue(hi - lo) >= -rel_tol * scale;
}

inline double spectral_norm(const Matrix& m)
{
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues()(0);
}

inline double relative_error(const Matrix& a, const Matrix& b)
{
    return (a - b).norm() / b.norm();
}

/// Phaseless batch that sees the columns of `x` through the given designs.
inline MeasurementBatch batch_from(const std::vector<Matrix>& designs, const Matrix& x,
                                   ObservationKind kind = ObservationKind::magnitude)
{
    std::vector<Vector> obs;
    for (std::size_t k = 0; k < designs.size(); ++k)
    {
        Vector y = designs[k].transpose() * x.col(static_cast<Index>(k));
        obs.push_back(kind == ObservationKind::magnitude ? Vector(y.cwiseAbs()) : y);
    }
    return MeasurementBatch(designs, std::move(obs), 0, kind);
}

///
/// Dense least-squares oracle for the subspace step: assembles the
/// (mq) x (nr) system `[ĉ_k ∘ y_k] = (b_kᵀ ⊗ A_kᵀ) vec(U)` and solves it
/// with column-pivoted Householder QR.
///
inline Matrix dense_subspace_solve(const Matrix& b, const std::vector<Vector>& signs,
                                   const MeasurementBatch& batch)
{
    const Index n = batch.n();
    const Index m = batch.m();
    const Index q = batch.q();
    const Index r = b.rows();
    Matrix sys(m * q, n * r);
    Vector rhs(m * q);
    for (Index k = 0; k < q; ++k)
    {
        const Matrix at = batch.design(k).transpose();
        for (Index j = 0; j < r; ++j)
        {
            sys.block(k * m, j * n, m, n) = b(j, k) * at;
        }
        rhs.segment(k * m, m) = signs[static_cast<std::size_t>(k)].cwiseProduct(batch.obs(k));
    }
    const Vector sol = sys.colPivHouseholderQr().solve(rhs);
    return Eigen::Map<const Matrix>(sol.data(), n, r);
}

}  // namespace lrpr::testing
