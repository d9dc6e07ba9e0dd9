#pragma once

#include <Eigen/Dense>

#include <complex>
#include <vector>

namespace koopgraph {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;

/// Thin SVD, a = u * diag(sigma) * vt with k = min(rows, cols).
struct SvdFactors {
    Matrix u;      // m x k, orthonormal columns
    Vector sigma;  // k, non-increasing, >= 0
    Matrix vt;     // k x n, orthonormal rows
};

/// Eigenpairs of a general real matrix, ordered by descending |lambda|,
/// then descending real part, then ascending imaginary part. Conjugate
/// pairs are therefore adjacent with the negative-imaginary member first.
struct EigResult {
    ComplexVector values;
    ComplexMatrix vectors;  // unit 2-norm columns
    std::vector<bool> is_real;
};

/// Spectrum of a symmetric matrix, values descending, orthonormal vectors.
struct SymmetricEig {
    Vector values;
    Matrix vectors;
};

SvdFactors svd(const Matrix& a);

EigResult eig_general(const Matrix& a);

/// Throws ContractError when ||a - a^T||_inf > 1e-10 * ||a||_inf.
SymmetricEig eig_symmetric(const Matrix& a);

/// Moore-Penrose pseudo-inverse; singular values below rcond * sigma_max
/// are treated as zero.
Matrix pinv(const Matrix& a, double rcond = 1e-12);

/// Minimum-norm least-squares solution of a * x = b.
Matrix lstsq(const Matrix& a, const Matrix& b, double rcond = 1e-12);

// Helpers shared by the estimators and the tests.

/// Number of singular values above rcond * sigma_max.
int numerical_rank(const Vector& sigma, double rcond);

/// Orthonormal basis of the column span of a (rank by rcond).
Matrix orthonormal_basis(const Matrix& a, double rcond = 1e-12);

/// Largest principal angle (radians) between the column spans of a and b.
/// Computed through sines so that angles near zero keep full precision.
/// When the spans have different dimensions the smaller one is measured
/// against the larger.
double largest_principal_angle(const Matrix& a, const Matrix& b);

/// ||a - b||_F / ||b||_F, or ||a - b||_F when b is zero.
double relative_frobenius_error(const Matrix& a, const Matrix& b);

bool all_finite(const Matrix& a);

}  // namespace koopgraph
