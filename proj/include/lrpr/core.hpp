///
/// \file core.hpp
///
/// Dense matrix domain types, distance metrics and orthonormalization shared
/// by every solver in the library.
///
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lrpr
{

using Index  = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error
{
public:
    using Error::Error;
};

class RankDeficient : public Error
{
public:
    using Error::Error;
};

class DegenerateData : public Error
{
public:
    using Error::Error;
};

inline void require_same_rows(const Matrix& a, const Matrix& b, const char* what)
{
    if (a.rows() != b.rows())
    {
        throw DimensionMismatch(std::string(what) + ": row count " +
                                std::to_string(a.rows()) + " vs " +
                                std::to_string(b.rows()));
    }
}

inline void require_finite(const Matrix& m, const char* what)
{
    if (!m.allFinite())
    {
        throw Error(std::string(what) + ": non-finite entry");
    }
}

/// sign(0) is +1 throughout the library.
inline double sign_of(double v) noexcept
{
    return v < 0.0 ? -1.0 : 1.0;
}

///
/// Tall matrix with orthonormal columns. Construction validates
/// `‖QᵀQ − I‖_max ≤ tolerance`.
///
class BasisMatrix
{
public:
    static constexpr double kTolerance = 1e-10;

    BasisMatrix() = default;

    explicit BasisMatrix(Matrix mat) : m_mat(std::move(mat))
    {
        if (m_mat.rows() < m_mat.cols())
        {
            throw DimensionMismatch("BasisMatrix: more columns than rows");
        }
        require_finite(m_mat, "BasisMatrix");
        const double dev = orthonormality_defect(m_mat);
        if (dev > kTolerance)
        {
            throw Error("BasisMatrix: columns not orthonormal (defect " +
                        std::to_string(dev) + ")");
        }
    }

    static double orthonormality_defect(const Matrix& m)
    {
        if (m.cols() == 0)
        {
            return 0.0;
        }
        Matrix gram = m.transpose() * m;
        gram.diagonal().array() -= 1.0;
        return gram.cwiseAbs().maxCoeff();
    }

    const Matrix& mat() const noexcept { return m_mat; }
    Index rows() const noexcept { return m_mat.rows(); }
    Index cols() const noexcept { return m_mat.cols(); }

    /// Projection of `x` onto the orthogonal complement of the span.
    Matrix project_out(const Matrix& x) const
    {
        return x - m_mat * (m_mat.transpose() * x);
    }

    BasisMatrix negated() const
    {
        BasisMatrix out;
        out.m_mat = -m_mat;
        return out;
    }

    BasisMatrix leading(Index r) const
    {
        BasisMatrix out;
        out.m_mat = m_mat.leftCols(r);
        return out;
    }

private:
    Matrix m_mat;
};

///
/// Planted rank-r factorization `X* = U* diag(σ) B*`, stored in SVD form.
///
struct GroundTruth
{
    BasisMatrix ustar;
    Vector sigma;  // nonincreasing, positive
    Matrix bstar;  // r x q, orthonormal rows
    Matrix xstar;  // n x q
    double kappa = 1.0;
    double mu    = 1.0;

    Index n() const noexcept { return xstar.rows(); }
    Index q() const noexcept { return xstar.cols(); }
    Index rank() const noexcept { return sigma.size(); }
    double sigma_min() const { return sigma(sigma.size() - 1); }
    double sigma_max() const { return sigma(0); }

    /// Rebuild the SVD-form factors of a rank-r product `u0 * coeffs`.
    static GroundTruth from_factors(const Matrix& u0, const Matrix& coeffs);

    /// Reference basis for subspace errors at an estimated rank.
    /// For `r_hat <= r` this is the leading `r_hat` left singular vectors;
    /// for larger estimates the full `U*` is returned.
    BasisMatrix reference_basis(Index r_hat) const
    {
        return r_hat < rank() ? ustar.leading(r_hat) : ustar;
    }
};

/// One outer-iteration row of a solver trace.
struct IterationRecord
{
    Index iter          = 0;
    double elapsed_s    = 0.0;
    double se           = std::numeric_limits<double>::quiet_NaN();
    double matdist_rel  = std::numeric_limits<double>::quiet_NaN();
    Index cg_iterations = 0;
};

enum class RecoveryStatus
{
    converged,
    failed,
    degenerate_rank,
};

inline const char* to_string(RecoveryStatus s) noexcept
{
    switch (s)
    {
    case RecoveryStatus::converged:
        return "converged";
    case RecoveryStatus::failed:
        return "failed";
    case RecoveryStatus::degenerate_rank:
        return "degenerate-rank";
    }
    return "unknown";
}

struct RecoveryResult
{
    BasisMatrix uhat;
    Matrix bhat;
    Matrix xhat;
    std::vector<IterationRecord> trace;
    Index rank_used        = 0;
    RecoveryStatus status  = RecoveryStatus::failed;
    bool rank_mismatch     = false;
    Index cg_nonconverged  = 0;
    Index rwf_degenerate   = 0;
};

//------------------------------------------------------------------------------
// Metrics
//------------------------------------------------------------------------------

///
/// Sine of the largest principal angle, `‖(I − u1 u1ᵀ) u2‖₂`.
///
/// The one-sided formula is used literally, so `u1` and `u2` may carry a
/// different number of columns; the row counts must agree.
///
inline double subspace_error(const BasisMatrix& u1, const BasisMatrix& u2)
{
    require_same_rows(u1.mat(), u2.mat(), "subspace_error");
    if (u2.cols() == 0)
    {
        return 0.0;
    }
    const Matrix resid = u1.project_out(u2.mat());
    Eigen::JacobiSVD<Matrix> svd(resid);
    return svd.singularValues()(0);
}

inline double phase_dist(const Vector& x, const Vector& xhat)
{
    if (x.size() != xhat.size())
    {
        throw DimensionMismatch("phase_dist: length mismatch");
    }
    return std::min((x - xhat).norm(), (x + xhat).norm());
}

inline double mat_dist(const Matrix& xhat, const Matrix& xstar)
{
    if (xhat.rows() != xstar.rows() || xhat.cols() != xstar.cols())
    {
        throw DimensionMismatch("mat_dist: shape mismatch");
    }
    double acc = 0.0;
    for (Index k = 0; k < xstar.cols(); ++k)
    {
        const double d = phase_dist(xstar.col(k), xhat.col(k));
        acc += d * d;
    }
    return std::sqrt(acc);
}

/// `mat_dist(xhat, xstar) / ‖xstar‖_F`.
inline double relative_mat_dist(const Matrix& xhat, const Matrix& xstar)
{
    const double denom = xstar.norm();
    const double d     = mat_dist(xhat, xstar);
    return denom > 0.0 ? d / denom : d;
}

//------------------------------------------------------------------------------
// Orthonormalization
//------------------------------------------------------------------------------

struct QrFactors
{
    BasisMatrix q;
    Matrix r;
};

///
/// Thin QR `m = Q R` with strictly positive diagonal of `R`.
///
/// Throws RankDeficient when the smallest |R_ii| falls below
/// `1e-12 · max |R_ii|`.
///
inline QrFactors orthonormalize(const Matrix& m)
{
    const Index n = m.rows();
    const Index r = m.cols();
    if (r == 0 || n < r)
    {
        throw DimensionMismatch("orthonormalize: need n >= r >= 1");
    }
    require_finite(m, "orthonormalize");

    Eigen::HouseholderQR<Matrix> qr(m);
    Matrix rr = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
    Matrix qq = qr.householderQ() * Matrix::Identity(n, r);

    const Vector diag = rr.diagonal().cwiseAbs();
    const double big  = diag.maxCoeff();
    if (!(big > 0.0) || diag.minCoeff() < 1e-12 * big)
    {
        throw RankDeficient("orthonormalize: rank-deficient input");
    }
    for (Index i = 0; i < r; ++i)
    {
        if (rr(i, i) < 0.0)
        {
            rr.row(i) *= -1.0;
            qq.col(i) *= -1.0;
        }
    }
    return {BasisMatrix(std::move(qq)), std::move(rr)};
}

///
/// Orthonormal basis of `span(m)` by modified Gram-Schmidt with one
/// reorthogonalization pass. Columns whose residual norm drops below
/// `tol · ‖column‖` are discarded, so the result may have fewer columns.
///
inline BasisMatrix span_basis(const Matrix& m, double tol = 1e-8)
{
    Matrix out(m.rows(), std::min(m.rows(), m.cols()));
    Index kept = 0;
    for (Index j = 0; j < m.cols() && kept < m.rows(); ++j)
    {
        Vector v           = m.col(j);
        const double scale = v.norm();
        if (scale == 0.0)
        {
            continue;
        }
        for (int pass = 0; pass < 2; ++pass)
        {
            for (Index i = 0; i < kept; ++i)
            {
                v -= out.col(i).dot(v) * out.col(i);
            }
        }
        const double nv = v.norm();
        if (nv < tol * scale)
        {
            continue;
        }
        out.col(kept++) = v / nv;
    }
    return BasisMatrix(out.leftCols(kept));
}

///
/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// descending order.
///
struct SymmetricSpectrum
{
    Vector values;   // descending
    Matrix vectors;  // columns match `values`
};

inline SymmetricSpectrum symmetric_spectrum(const Matrix& sym, bool with_vectors = true)
{
    Eigen::SelfAdjointEigenSolver<Matrix> es(
        sym, with_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
    {
        throw Error("symmetric eigensolver failed");
    }
    SymmetricSpectrum out;
    out.values = es.eigenvalues().reverse();
    if (with_vectors)
    {
        out.vectors = es.eigenvectors().rowwise().reverse();
    }
    return out;
}

/// Flip each column so that its largest-magnitude entry is positive.
inline void canonicalize_signs(Matrix& vecs)
{
    for (Index j = 0; j < vecs.cols(); ++j)
    {
        Index arg = 0;
        vecs.col(j).cwiseAbs().maxCoeff(&arg);
        if (vecs(arg, j) < 0.0)
        {
            vecs.col(j) *= -1.0;
        }
    }
}

inline GroundTruth GroundTruth::from_factors(const Matrix& u0, const Matrix& coeffs)
{
    if (u0.cols() != coeffs.rows())
    {
        throw DimensionMismatch("GroundTruth: inner dimension mismatch");
    }
    const Index r = u0.cols();
    const Index q = coeffs.cols();
    if (r > q || r > u0.rows())
    {
        throw DimensionMismatch("GroundTruth: rank exceeds min(n, q)");
    }
    const BasisMatrix basis = orthonormalize(u0).q;
    // u0 * coeffs = basis * (R coeffs); SVD of the small r x q factor.
    const Matrix small = orthonormalize(u0).r * coeffs;
    Eigen::JacobiSVD<Matrix> svd(small, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector s = svd.singularValues();
    if (!(s(r - 1) > 1e-12 * s(0)))
    {
        throw RankDeficient("GroundTruth: coefficient matrix is rank deficient");
    }

    GroundTruth gt;
    Matrix u = basis.mat() * svd.matrixU();
    Matrix v = svd.matrixV();
    // Deterministic sign: largest entry of each left singular vector positive.
    for (Index j = 0; j < r; ++j)
    {
        Index arg = 0;
        u.col(j).cwiseAbs().maxCoeff(&arg);
        if (u(arg, j) < 0.0)
        {
            u.col(j) *= -1.0;
            v.col(j) *= -1.0;
        }
    }
    gt.ustar = BasisMatrix(std::move(u));
    gt.sigma = s;
    gt.bstar = v.transpose();
    gt.xstar = u0 * coeffs;
    gt.kappa = s(0) / s(r - 1);
    gt.mu    = std::sqrt(static_cast<double>(q) / static_cast<double>(r)) *
            gt.bstar.colwise().norm().maxCoeff();
    return gt;
}

}  // namespace lrpr
