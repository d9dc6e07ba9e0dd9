#include "koopgraph/dmd.hpp"

#include "koopgraph/error.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace koopgraph {

namespace {

constexpr double kTieTolerance = 1e-12;
constexpr double kIllConditioned = 1e-14;

void require_pair(const SnapshotPair& pair, const char* op) {
    if (pair.x.rows() != pair.y.rows() || pair.x.cols() != pair.y.cols()) {
        throw ContractError(std::string(op) + ": x and y differ in shape");
    }
    if (pair.x.size() == 0 || pair.x.cwiseAbs().maxCoeff() == 0.0) {
        throw DegenerateInputError(std::string(op) + ": snapshot matrix x is all zero");
    }
    if (!pair.x.allFinite() || !pair.y.allFinite()) {
        throw ContractError(std::string(op) + ": snapshots contain NaN or Inf");
    }
}

double full_rank_rcond(const Matrix& x) {
    return static_cast<double>(std::max(x.rows(), x.cols())) * std::numeric_limits<double>::epsilon();
}

double energy_fraction(const Vector& sigma, int r) {
    const double total = sigma.squaredNorm();
    return total > 0.0 ? sigma.head(r).squaredNorm() / total : 0.0;
}

void normalize_columns(Matrix& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double nrm = m.col(j).norm();
        if (nrm > 0.0) m.col(j) /= nrm;
    }
}

// Sine of the angle between complex vectors a and b.
double complex_sine(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    const Eigen::VectorXcd bh = b / nb;
    const Eigen::VectorXcd resid = a - bh * bh.dot(a);
    return std::min(1.0, resid.norm() / na);
}

}  // namespace

std::string to_string(ModeKind kind) {
    return kind == ModeKind::projected ? "projected" : "exact";
}

ModeKind mode_kind_from_string(const std::string& name) {
    if (name == "projected") return ModeKind::projected;
    if (name == "exact") return ModeKind::exact;
    throw ContractError("unknown mode kind '" + name + "'");
}

int truncation_rank(const Vector& sigma, double xi) {
    if (!(xi > 0.0 && xi <= 1.0)) {
        throw ContractError("truncation_rank: xi must lie in (0, 1]");
    }
    const auto k = static_cast<int>(sigma.size());
    if (k == 0) return 0;
    double total = 0.0;
    for (int i = 0; i < k; ++i) total += sigma[i] * sigma[i];
    const double target = xi * total;
    int r = k;
    double cum = 0.0;
    for (int i = 0; i < k; ++i) {
        cum += sigma[i] * sigma[i];
        if (cum >= target) {
            r = i + 1;
            break;
        }
    }
    const double tie = kTieTolerance * sigma[0];
    while (r < k && sigma[r] > tie && std::abs(sigma[r - 1] - sigma[r]) <= tie) ++r;
    return r;
}

int resolve_rank(const Vector& sigma, const Truncation& trunc, Eigen::Index max_rank) {
    switch (trunc.kind) {
        case Truncation::Kind::energy: return truncation_rank(sigma, trunc.xi);
        case Truncation::Kind::rank:
            if (trunc.r < 1 || trunc.r > max_rank) {
                throw ContractError("dmd: rank " + std::to_string(trunc.r) + " outside [1, " +
                                    std::to_string(max_rank) + "]");
            }
            return trunc.r;
        case Truncation::Kind::full: break;
    }
    return std::max(1, numerical_rank(sigma, static_cast<double>(max_rank) *
                                                 std::numeric_limits<double>::epsilon()));
}

Matrix realify_eigenvectors(const EigResult& eig, Eigen::Index count) {
    const Eigen::Index n = eig.vectors.rows();
    Matrix out(n, count);
    Eigen::Index i = 0;
    while (i < count) {
        if (eig.is_real[static_cast<std::size_t>(i)]) {
            out.col(i) = eig.vectors.col(i).real();
            ++i;
            continue;
        }
        const bool paired = i + 1 < eig.values.size() &&
                            eig.values[i + 1] == std::conj(eig.values[i]);
        if (!paired) {
            throw NumericalError("realify: complex eigenvalue without adjacent conjugate");
        }
        out.col(i) = eig.vectors.col(i).real();
        if (i + 1 < count) out.col(i + 1) = eig.vectors.col(i).imag();
        i += 2;
    }
    normalize_columns(out);
    return out;
}

DmdResult dmd_fit(const SnapshotPair& pair, const Truncation& trunc, ModeKind mode_kind) {
    require_pair(pair, "dmd_fit");
    const SvdFactors f = svd(pair.x);
    const Eigen::Index max_rank = f.sigma.size();

    DmdResult out;
    out.sing_values = f.sigma;
    out.mode_kind = mode_kind;
    if (trunc.kind == Truncation::Kind::energy) out.requested_xi = trunc.xi;

    int r = resolve_rank(f.sigma, trunc, max_rank);
    if (f.sigma[r - 1] <= 0.0) {
        throw DegenerateInputError("dmd_fit: retained singular value is zero");
    }
    const Matrix m_r = f.u.leftCols(r);
    const Matrix v_r = f.vt.topRows(r).transpose();
    const Vector inv_sigma = f.sigma.head(r).cwiseInverse();
    const Matrix y_v_sinv = pair.y * v_r * inv_sigma.asDiagonal();  // N x r
    out.k_reduced = m_r.transpose() * y_v_sinv;

    const EigResult eig = eig_general(out.k_reduced);
    // A conjugate pair cannot be split between kept and dropped modes, but
    // all r eigenpairs of K are kept, so nothing is cut here.
    const Matrix u_real = realify_eigenvectors(eig, r);

    if (mode_kind == ModeKind::projected) {
        out.modes = m_r * u_real;
    } else {
        out.modes = y_v_sinv * u_real;
        const Matrix projected = m_r * u_real;
        const double floor = 1e-12 * std::max(1.0, pair.y.norm());
        for (Eigen::Index j = 0; j < out.modes.cols(); ++j) {
            // Zero eigenvalues lift to the zero vector; keep the projected mode.
            if (out.modes.col(j).norm() <= floor) out.modes.col(j) = projected.col(j);
        }
    }
    normalize_columns(out.modes);

    out.rank = r;
    out.eigenvalues = eig.values;
    out.energy_captured = energy_fraction(f.sigma, r);
    if (f.sigma[r - 1] / f.sigma[0] < kIllConditioned) {
        out.warnings.push_back("ill-conditioned truncation: sigma_r / sigma_1 = " +
                               std::to_string(f.sigma[r - 1] / f.sigma[0]));
    }
    return out;
}

double exact_equals_projected_check(const SnapshotPair& pair, int r) {
    require_pair(pair, "exact_equals_projected_check");
    const SvdFactors f = svd(pair.x);
    r = resolve_rank(f.sigma, Truncation::rank(r), f.sigma.size());
    const Matrix m_r = f.u.leftCols(r);
    const Matrix y_v_sinv =
        pair.y * f.vt.topRows(r).transpose() * f.sigma.head(r).cwiseInverse().asDiagonal();
    const EigResult eig = eig_general(m_r.transpose() * y_v_sinv);
    const ComplexMatrix projected = m_r.cast<std::complex<double>>() * eig.vectors;
    const ComplexMatrix exact = y_v_sinv.cast<std::complex<double>>() * eig.vectors;
    const double floor = 1e-12 * std::max(1.0, pair.y.norm());
    double worst = 0.0;
    for (Eigen::Index j = 0; j < eig.values.size(); ++j) {
        if (exact.col(j).norm() <= floor) continue;
        worst = std::max(worst, std::asin(complex_sine(exact.col(j), projected.col(j))));
    }
    return worst;
}

std::string to_string(const PidmdConstraint& c) {
    switch (c.kind) {
        case PidmdConstraint::Kind::none: return "none";
        case PidmdConstraint::Kind::symmetric: return "symmetric";
        case PidmdConstraint::Kind::orthogonal: return "orthogonal";
        case PidmdConstraint::Kind::ridge: return "ridge";
    }
    return "unknown";
}

PidmdConstraint constraint_from_string(const std::string& name, double lambda) {
    if (name == "none") return PidmdConstraint::none();
    if (name == "symmetric") return PidmdConstraint::symmetric();
    if (name == "orthogonal") return PidmdConstraint::orthogonal();
    if (name == "ridge") {
        if (!(std::isfinite(lambda) && lambda >= 0.0)) {
            throw ContractError("ridge lambda must be finite and >= 0");
        }
        return PidmdConstraint::ridge(lambda);
    }
    throw ContractError("unknown constraint '" + name + "'");
}

namespace {

// Higham's nearest-symmetric least-squares solution.
Matrix symmetric_procrustes(const Matrix& x, const Matrix& y) {
    const Eigen::Index n = x.rows();
    Eigen::BDCSVD<Matrix> solver(x, Eigen::ComputeFullU | Eigen::ComputeThinV);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("pidmd symmetric: svd did not converge");
    }
    const Matrix& u = solver.matrixU();  // n x n
    const Vector& s = solver.singularValues();
    const int k = numerical_rank(s, full_rank_rcond(x));
    const Matrix c = u.transpose() * y * solver.matrixV().leftCols(k);  // n x k

    auto sigma = [&](Eigen::Index i) { return i < k ? s[i] : 0.0; };
    Matrix g = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
            const double si = sigma(i);
            const double sj = sigma(j);
            const double den = si * si + sj * sj;
            if (den == 0.0) continue;
            double num = 0.0;
            if (j < k) num += sj * c(i, j);
            if (i < k) num += si * c(j, i);
            g(i, j) = num / den;
            g(j, i) = g(i, j);
        }
    }
    Matrix kmat = u * g * u.transpose();
    // (a + b) * 0.5 is bitwise commutative, so this store is exactly symmetric.
    kmat = ((kmat + kmat.transpose()) * 0.5).eval();
    return kmat;
}

// Schoenemann's orthogonal Procrustes solution.
Matrix orthogonal_procrustes(const Matrix& x, const Matrix& y) {
    const SvdFactors f = svd(y * x.transpose());
    return f.u * f.vt;
}

}  // namespace

Matrix pidmd_fit(const SnapshotPair& pair, const PidmdConstraint& constraint) {
    require_pair(pair, "pidmd_fit");
    switch (constraint.kind) {
        case PidmdConstraint::Kind::none: return pair.y * pinv(pair.x);
        case PidmdConstraint::Kind::symmetric: return symmetric_procrustes(pair.x, pair.y);
        case PidmdConstraint::Kind::orthogonal: return orthogonal_procrustes(pair.x, pair.y);
        case PidmdConstraint::Kind::ridge: {
            if (!(std::isfinite(constraint.lambda) && constraint.lambda >= 0.0)) {
                throw ContractError("pidmd_fit: ridge lambda must be finite and >= 0");
            }
            if (constraint.lambda == 0.0) return pair.y * pinv(pair.x);
            const Eigen::Index n = pair.x.rows();
            const Matrix gram = pair.x * pair.x.transpose() + constraint.lambda * Matrix::Identity(n, n);
            // K gram = y x^T with gram symmetric positive definite.
            const Eigen::LLT<Matrix> llt(gram);
            if (llt.info() != Eigen::Success) {
                throw NumericalError("pidmd_fit: ridge system is not positive definite");
            }
            return llt.solve(pair.x * pair.y.transpose()).transpose();
        }
    }
    throw ContractError("pidmd_fit: unknown constraint");
}

DmdResult modes_from_operator(const Matrix& k, int r) {
    if (k.rows() != k.cols()) {
        throw ContractError("modes_from_operator: operator is not square");
    }
    const auto n = static_cast<int>(k.rows());
    if (r < 1 || r > n) {
        throw ContractError("modes_from_operator: rank outside [1, N]");
    }
    DmdResult out;
    if (k == k.transpose()) {
        SymmetricEig sym = eig_symmetric(k);
        std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
            const double ma = std::abs(sym.values[a]);
            const double mb = std::abs(sym.values[b]);
            return ma != mb ? ma > mb : sym.values[a] > sym.values[b];
        });
        out.modes.resize(n, r);
        out.eigenvalues.resize(r);
        for (int j = 0; j < r; ++j) {
            out.modes.col(j) = sym.vectors.col(order[static_cast<std::size_t>(j)]);
            out.eigenvalues[j] = sym.values[order[static_cast<std::size_t>(j)]];
        }
    } else {
        const EigResult eig = eig_general(k);
        if (!eig.is_real[static_cast<std::size_t>(r - 1)] && r < n &&
            eig.values[r] == std::conj(eig.values[r - 1])) {
            ++r;
        }
        out.modes = realify_eigenvectors(eig, r);
        out.eigenvalues = eig.values.head(r);
    }
    out.rank = r;
    out.k_reduced = pinv(out.modes) * k * out.modes;
    return out;
}

SlowSubspaceReport slow_subspace_report(const Matrix& a_true, int split_d, const SnapshotPair& pair,
                                        const SlowSubspaceOptions& options) {
    const SymmetricEig eig = eig_symmetric(a_true);
    const auto n = static_cast<int>(eig.values.size());
    if (split_d < 1 || split_d > n) {
        throw ContractError("slow_subspace_report: split index outside [1, N]");
    }
    if (pair.x.rows() != n) {
        throw ContractError("slow_subspace_report: snapshot dimension differs from a_true");
    }

    // Slowest first: largest real part for continuous generators, largest
    // modulus for discrete maps.
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return options.continuous ? eig.values[a] > eig.values[b]
                                  : std::abs(eig.values[a]) > std::abs(eig.values[b]);
    });

    SlowSubspaceReport report;
    report.true_slow_eigs.resize(split_d);
    Matrix slow_basis(n, split_d);
    for (int j = 0; j < split_d; ++j) {
        const Eigen::Index src = order[static_cast<std::size_t>(j)];
        report.true_slow_eigs[j] = eig.values[src];
        slow_basis.col(j) = eig.vectors.col(src);
    }
    if (split_d < n) {
        const double last_slow = eig.values[order[static_cast<std::size_t>(split_d - 1)]];
        const double first_fast = eig.values[order[static_cast<std::size_t>(split_d)]];
        if (last_slow == first_fast) {
            report.warnings.push_back("no spectral gap at the split index");
        }
    }

    const auto max_rank = static_cast<int>(std::min(pair.x.rows(), pair.x.cols()));
    const int r = std::min(split_d, max_rank);
    if (r != split_d) {
        report.warnings.push_back("dimension mismatch: DMD rank " + std::to_string(r) +
                                  " differs from slow dimension " + std::to_string(split_d));
    }
    const DmdResult fit = dmd_fit(pair, Truncation::rank(r), ModeKind::projected);
    report.dmd_eigs = fit.eigenvalues;

    std::vector<std::complex<double>> expected(static_cast<std::size_t>(split_d));
    for (int j = 0; j < split_d; ++j) {
        const double lam = report.true_slow_eigs[j];
        expected[static_cast<std::size_t>(j)] = options.continuous ? std::exp(lam * options.dt) : lam;
    }
    // Greedy nearest-neighbour assignment in the complex plane.
    std::vector<bool> used_dmd(static_cast<std::size_t>(fit.eigenvalues.size()), false);
    std::vector<bool> used_true(expected.size(), false);
    const auto matches = std::min<std::size_t>(expected.size(), used_dmd.size());
    for (std::size_t m = 0; m < matches; ++m) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0;
        std::size_t bj = 0;
        for (std::size_t i = 0; i < used_dmd.size(); ++i) {
            if (used_dmd[i]) continue;
            for (std::size_t j = 0; j < expected.size(); ++j) {
                if (used_true[j]) continue;
                const double dist = std::abs(fit.eigenvalues[static_cast<Eigen::Index>(i)] - expected[j]);
                if (dist < best) {
                    best = dist;
                    bi = i;
                    bj = j;
                }
            }
        }
        used_dmd[bi] = true;
        used_true[bj] = true;
        report.matched_error = std::max(report.matched_error, best);
    }
    report.subspace_angle = largest_principal_angle(fit.modes, slow_basis);
    return report;
}

}  // namespace koopgraph
