#include "koopgraph/error.hpp"
#include "koopgraph/tasks.hpp"

#include <algorithm>
#include <cmath>

namespace koopgraph {

void SchrodingerSetup::validate() const {
    if (n_nodes < 2) throw ContractError("schrodinger: n_nodes must be >= 2");
    if (!(dt > 0.0) || !(dx > 0.0) || !(width > 0.0)) {
        throw ContractError("schrodinger: dt, dx and width must be positive");
    }
    if (!(hbar > 0.0) || !(mass > 0.0)) throw ContractError("schrodinger: hbar and mass must be positive");
    if (holdout < 1 || steps <= holdout + 1) {
        throw ContractError("schrodinger: need 1 <= holdout < steps - 1");
    }
}

namespace {

/// Real form of the Crank-Nicolson step for i hbar psi' = H psi.
Matrix crank_nicolson_map(const SchrodingerSetup& s) {
    const Matrix adj = chain_graph(s.n_nodes).adjacency();
    Matrix lap = -adj;
    lap.diagonal() += adj.rowwise().sum();
    const Matrix h = (s.hbar * s.hbar / (2.0 * s.mass * s.dx * s.dx)) * lap;
    const SymmetricEig eig = eig_symmetric(h);
    // (1 - i a mu) / (1 + i a mu) = exp(-i phi) with phi = 2 atan(a mu).
    const double a = s.dt / (2.0 * s.hbar);
    Vector phi(eig.values.size());
    for (Eigen::Index k = 0; k < phi.size(); ++k) phi(k) = 2.0 * std::atan(a * eig.values(k));
    const Matrix& v = eig.vectors;
    const Matrix cr = v * phi.array().cos().matrix().asDiagonal() * v.transpose();
    const Matrix ci = -(v * phi.array().sin().matrix().asDiagonal() * v.transpose());
    const auto n = s.n_nodes;
    Matrix r(2 * n, 2 * n);
    r.topLeftCorner(n, n) = cr;
    r.topRightCorner(n, n) = -ci;
    r.bottomLeftCorner(n, n) = ci;
    r.bottomRightCorner(n, n) = cr;
    return r;
}

Vector initial_state(const SchrodingerSetup& s) {
    const int n = s.n_nodes;
    const double k = s.wavenumber / s.dx;
    Vector z(2 * n);
    for (int j = 0; j < n; ++j) {
        const double x = j * s.dx - s.x0;
        const double envelope = std::exp(-x * x / (4.0 * s.width * s.width));
        z(j) = envelope * std::cos(k * x);
        z(n + j) = envelope * std::sin(k * x);
    }
    return z / z.norm();
}

}  // namespace

SchrodingerReport schrodinger_demo(const SchrodingerSetup& setup) {
    setup.validate();
    const Matrix r = crank_nicolson_map(setup);

    SchrodingerReport rep;
    rep.constraint = to_string(setup.constraint);
    rep.truth.resize(2 * setup.n_nodes, setup.steps + 1);
    rep.truth.col(0) = initial_state(setup);
    for (int t = 0; t < setup.steps; ++t) rep.truth.col(t + 1) = r * rep.truth.col(t);
    const double norm0 = rep.truth.col(0).norm();
    for (int t = 0; t <= setup.steps; ++t) {
        rep.truth_norm_drift = std::max(rep.truth_norm_drift, std::abs(rep.truth.col(t).norm() - norm0));
    }

    const int fit_pairs = setup.steps - setup.holdout;
    SnapshotPair pair;
    pair.x = rep.truth.leftCols(fit_pairs);
    pair.y = rep.truth.middleCols(1, fit_pairs);

    SnapshotPair dmd_pair = pair;
    if (setup.spanning_snapshots) {
        const Eigen::Index dim = rep.truth.rows();
        Rng rng = make_stream(setup.seed, "snapshots");
        Matrix extra(dim, dim);
        for (Eigen::Index i = 0; i < extra.size(); ++i) extra.data()[i] = standard_normal(rng);
        dmd_pair.x.conservativeResize(Eigen::NoChange, fit_pairs + dim);
        dmd_pair.y.conservativeResize(Eigen::NoChange, fit_pairs + dim);
        dmd_pair.x.rightCols(dim) = extra;
        dmd_pair.y.rightCols(dim) = r * extra;
    }
    const Matrix k_dmd = pidmd_fit(dmd_pair, PidmdConstraint::none());
    for (int t = fit_pairs; t < setup.steps; ++t) {
        const auto next = rep.truth.col(t + 1);
        const double err = (k_dmd * rep.truth.col(t) - next).norm() / next.norm();
        rep.dmd_onestep_err = std::max(rep.dmd_onestep_err, err);
    }

    const Matrix k_pidmd = pidmd_fit(pair, setup.constraint);
    rep.reconstruction.resize(rep.truth.rows(), setup.holdout + 1);
    rep.reconstruction.col(0) = rep.truth.col(fit_pairs);
    const double start_norm = rep.reconstruction.col(0).norm();
    for (int t = 0; t < setup.holdout; ++t) {
        rep.reconstruction.col(t + 1) = k_pidmd * rep.reconstruction.col(t);
        const auto truth = rep.truth.col(fit_pairs + t + 1);
        const auto pred = rep.reconstruction.col(t + 1);
        rep.pidmd_rollout_err = std::max(rep.pidmd_rollout_err, (pred - truth).norm() / truth.norm());
        rep.pidmd_norm_drift = std::max(rep.pidmd_norm_drift, std::abs(pred.norm() - start_norm) / start_norm);
    }
    return rep;
}

}  // namespace koopgraph
