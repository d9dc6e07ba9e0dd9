#pragma once

#include "koopgraph/dynamics.hpp"
#include "koopgraph/kernels.hpp"

#include <optional>
#include <string>
#include <vector>

namespace koopgraph {

enum class ModeKind { projected, exact };

std::string to_string(ModeKind kind);
ModeKind mode_kind_from_string(const std::string& name);

/// How many singular directions of the snapshot matrix to keep.
struct Truncation {
    enum class Kind { energy, rank, full };
    Kind kind = Kind::full;
    double xi = 1.0;  // energy: fraction of sum(sigma^2) to retain, in (0, 1]
    int r = 0;        // rank: explicit count

    static Truncation energy(double xi) { return {Kind::energy, xi, 0}; }
    static Truncation rank(int r) { return {Kind::rank, 1.0, r}; }
    /// Numerical rank of the snapshot matrix.
    static Truncation full() { return {Kind::full, 1.0, 0}; }
};

struct DmdResult {
    int rank = 0;
    Vector sing_values;        // every singular value of x
    Matrix k_reduced;          // r x r
    ComplexVector eigenvalues; // length r, ordered as eig_general
    Matrix modes;              // N x r, realified, unit columns
    ModeKind mode_kind = ModeKind::projected;
    double energy_captured = 0.0;
    std::optional<double> requested_xi;
    std::vector<std::string> warnings;
};

/// Smallest r whose leading sigma^2 mass reaches xi of the total. Singular
/// values tied with sigma_r (within 1e-12 sigma_1) are pulled in as well.
int truncation_rank(const Vector& sigma, double xi);

/// Resolve a Truncation against a spectrum.
int resolve_rank(const Vector& sigma, const Truncation& trunc, Eigen::Index max_rank);

/// Fit the reduced operator K = M_r^T y V_r Sigma_r^-1 and lift its
/// eigenvectors to N-space as projected (M_r U) or exact (y V_r Sigma_r^-1 U) modes.
DmdResult dmd_fit(const SnapshotPair& pair, const Truncation& trunc,
                  ModeKind mode_kind = ModeKind::projected);

/// Replace each conjugate eigenvector pair (v, conj v) by (Re v, Im v) and
/// keep real eigenvectors as they are. Columns are normalized to unit norm.
Matrix realify_eigenvectors(const EigResult& eig, Eigen::Index count);

/// Largest angle (radians) between matching projected and exact complex
/// modes at rank r. Modes whose exact lift vanishes (zero eigenvalue) are
/// skipped.
double exact_equals_projected_check(const SnapshotPair& pair, int r);

struct PidmdConstraint {
    enum class Kind { none, symmetric, orthogonal, ridge };
    Kind kind = Kind::none;
    double lambda = 0.0;

    static PidmdConstraint none() { return {Kind::none, 0.0}; }
    static PidmdConstraint symmetric() { return {Kind::symmetric, 0.0}; }
    static PidmdConstraint orthogonal() { return {Kind::orthogonal, 0.0}; }
    static PidmdConstraint ridge(double lambda) { return {Kind::ridge, lambda}; }
};

std::string to_string(const PidmdConstraint& c);
PidmdConstraint constraint_from_string(const std::string& name, double lambda = 0.0);

/// argmin over the constraint set of ||y - K x||_F at ambient size N x N.
Matrix pidmd_fit(const SnapshotPair& pair, const PidmdConstraint& constraint);

/// Leading r eigenpairs (by |lambda|) of a full operator, realified, as a
/// DmdResult usable by the spectral filter. A conjugate pair split by the
/// cut is kept whole, so the returned rank may be r + 1.
DmdResult modes_from_operator(const Matrix& k, int r);

struct SlowSubspaceReport {
    Vector true_slow_eigs;
    ComplexVector dmd_eigs;
    double matched_error = 0.0;
    double subspace_angle = 0.0;
    std::vector<std::string> warnings;
};

struct SlowSubspaceOptions {
    /// Continuous sources compare DMD eigenvalues to exp(lambda * dt);
    /// discrete sources compare them to lambda directly.
    bool continuous = false;
    double dt = 1.0;
};

/// Compares a rank-d DMD fit with the d slow eigenpairs of a symmetric
/// linear part a_true.
SlowSubspaceReport slow_subspace_report(const Matrix& a_true, int split_d, const SnapshotPair& pair,
                                        const SlowSubspaceOptions& options = {});

}  // namespace koopgraph
