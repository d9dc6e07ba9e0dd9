#include "koopgraph/kernels.hpp"

#include "koopgraph/error.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace koopgraph {

namespace {

void require_finite(const Matrix& a, const char* op) {
    if (!all_finite(a)) {
        throw ContractError(std::string(op) + ": input contains NaN or Inf");
    }
}

// Descending |lambda|, then descending real part, then ascending imaginary.
bool eig_order(const std::complex<double>& a, const std::complex<double>& b) {
    const double ma = std::abs(a);
    const double mb = std::abs(b);
    if (ma != mb) return ma > mb;
    if (a.real() != b.real()) return a.real() > b.real();
    return a.imag() < b.imag();
}

}  // namespace

bool all_finite(const Matrix& a) {
    return a.allFinite();
}

SvdFactors svd(const Matrix& a) {
    require_finite(a, "svd");
    const Eigen::Index k = std::min(a.rows(), a.cols());
    SvdFactors out;
    if (k == 0) {
        out.u = Matrix::Zero(a.rows(), 0);
        out.sigma = Vector::Zero(0);
        out.vt = Matrix::Zero(0, a.cols());
        return out;
    }
    Eigen::BDCSVD<Matrix> solver(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("svd: iteration did not converge");
    }
    out.u = solver.matrixU();
    out.sigma = solver.singularValues();
    out.vt = solver.matrixV().transpose();
    if (!out.u.allFinite() || !out.sigma.allFinite() || !out.vt.allFinite()) {
        throw NumericalError("svd: non-finite factors");
    }
    return out;
}

EigResult eig_general(const Matrix& a) {
    if (a.rows() != a.cols()) {
        throw ContractError("eig_general: matrix is not square");
    }
    require_finite(a, "eig_general");
    const Eigen::Index n = a.rows();
    EigResult out;
    if (n == 0) {
        return out;
    }
    Eigen::EigenSolver<Matrix> solver(a, true);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("eig_general: QR iteration did not converge");
    }
    const ComplexVector values = solver.eigenvalues();
    const ComplexMatrix vectors = solver.eigenvectors();

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) {
        return eig_order(values[i], values[j]);
    });

    out.values.resize(n);
    out.vectors.resize(n, n);
    out.is_real.resize(static_cast<std::size_t>(n));
    for (Eigen::Index k = 0; k < n; ++k) {
        const Eigen::Index src = order[static_cast<std::size_t>(k)];
        out.values[k] = values[src];
        Eigen::VectorXcd v = vectors.col(src);
        const double nrm = v.norm();
        if (nrm > 0.0) v /= nrm;
        out.vectors.col(k) = v;
        out.is_real[static_cast<std::size_t>(k)] = values[src].imag() == 0.0;
    }
    if (!out.values.allFinite() || !out.vectors.allFinite()) {
        throw NumericalError("eig_general: non-finite eigenpairs");
    }
    return out;
}

SymmetricEig eig_symmetric(const Matrix& a) {
    if (a.rows() != a.cols()) {
        throw ContractError("eig_symmetric: matrix is not square");
    }
    require_finite(a, "eig_symmetric");
    const double scale = a.cwiseAbs().rowwise().sum().maxCoeff();
    const Matrix diff = a - a.transpose();
    const double asym = diff.size() ? diff.cwiseAbs().rowwise().sum().maxCoeff() : 0.0;
    if (asym > 1e-10 * scale) {
        throw ContractError("eig_symmetric: matrix is not symmetric (||A - A^T||_inf = " +
                            std::to_string(asym) + ")");
    }
    SymmetricEig out;
    const Eigen::Index n = a.rows();
    if (n == 0) {
        return out;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> solver(a);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("eig_symmetric: tridiagonal QR did not converge");
    }
    // Eigen returns ascending order.
    out.values = solver.eigenvalues().reverse();
    out.vectors = solver.eigenvectors().rowwise().reverse();
    return out;
}

int numerical_rank(const Vector& sigma, double rcond) {
    if (sigma.size() == 0 || sigma[0] <= 0.0) return 0;
    const double cutoff = rcond * sigma[0];
    int r = 0;
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
        if (sigma[i] > cutoff) ++r;
    }
    return r;
}

Matrix pinv(const Matrix& a, double rcond) {
    if (!(rcond > 0.0 && rcond < 1.0)) {
        throw ContractError("pinv: rcond must lie in (0, 1)");
    }
    const SvdFactors f = svd(a);
    const int r = numerical_rank(f.sigma, rcond);
    if (r == 0) {
        return Matrix::Zero(a.cols(), a.rows());
    }
    const Vector inv = f.sigma.head(r).cwiseInverse();
    return f.vt.topRows(r).transpose() * inv.asDiagonal() * f.u.leftCols(r).transpose();
}

Matrix lstsq(const Matrix& a, const Matrix& b, double rcond) {
    if (a.rows() != b.rows()) {
        throw ContractError("lstsq: row counts differ (" + std::to_string(a.rows()) + " vs " +
                            std::to_string(b.rows()) + ")");
    }
    const SvdFactors f = svd(a);
    const int r = numerical_rank(f.sigma, rcond);
    if (r == 0) {
        return Matrix::Zero(a.cols(), b.cols());
    }
    const Matrix ub = f.u.leftCols(r).transpose() * b;
    const Vector inv = f.sigma.head(r).cwiseInverse();
    return f.vt.topRows(r).transpose() * (inv.asDiagonal() * ub);
}

Matrix orthonormal_basis(const Matrix& a, double rcond) {
    const SvdFactors f = svd(a);
    return f.u.leftCols(numerical_rank(f.sigma, rcond));
}

double largest_principal_angle(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ContractError("largest_principal_angle: ambient dimensions differ");
    }
    Matrix qa = orthonormal_basis(a);
    Matrix qb = orthonormal_basis(b);
    if (qa.cols() > qb.cols()) std::swap(qa, qb);
    if (qa.cols() == 0) return 0.0;
    // sin of the largest angle = ||(I - Qb Qb^T) Qa||_2
    const Matrix residual = qa - qb * (qb.transpose() * qa);
    const SvdFactors f = svd(residual);
    const double s = f.sigma.size() ? std::min(1.0, f.sigma[0]) : 0.0;
    return std::asin(s);
}

double relative_frobenius_error(const Matrix& a, const Matrix& b) {
    const double num = (a - b).norm();
    const double den = b.norm();
    return den > 0.0 ? num / den : num;
}

}  // namespace koopgraph
