#include "koopgraph/dynamics.hpp"

#include "koopgraph/error.hpp"

#include <cmath>

namespace koopgraph {

namespace {

void require_square_match(const Matrix& adj, const Matrix& h, const char* op) {
    if (adj.rows() != adj.cols()) {
        throw ContractError(std::string(op) + ": adjacency is not square");
    }
    if (h.rows() != adj.rows()) {
        throw ContractError(std::string(op) + ": state has " + std::to_string(h.rows()) +
                            " rows but the graph has " + std::to_string(adj.rows()) + " nodes");
    }
}

Matrix matrix_power_apply(const Matrix& adj, const Matrix& h, int power) {
    Matrix out = h;
    for (int k = 0; k < power; ++k) out = adj * out;
    return out;
}

Matrix acmp_step(const Matrix& adj, const Matrix& h, double b) {
    // (A - B) h + h * (1 - h * h), B = b on the support of A.
    Matrix diffusion = adj * h;
    if (b != 0.0) {
        const Matrix support = adj.unaryExpr([](double v) { return v != 0.0 ? 1.0 : 0.0; });
        diffusion -= b * (support * h);
    }
    const Matrix reaction = h.array() * (1.0 - h.array().square());
    return diffusion + reaction;
}

}  // namespace

std::string to_string(DynamicKind kind) {
    switch (kind) {
        case DynamicKind::gcn: return "gcn";
        case DynamicKind::sgc: return "sgc";
        case DynamicKind::dmdpp: return "dmdpp";
        case DynamicKind::acmp: return "acmp";
        case DynamicKind::heat: return "heat";
        case DynamicKind::custom_linear: return "custom_linear";
    }
    return "unknown";
}

DynamicKind dynamic_kind_from_string(const std::string& name) {
    if (name == "gcn") return DynamicKind::gcn;
    if (name == "sgc") return DynamicKind::sgc;
    if (name == "dmdpp") return DynamicKind::dmdpp;
    if (name == "acmp") return DynamicKind::acmp;
    if (name == "heat") return DynamicKind::heat;
    if (name == "custom_linear") return DynamicKind::custom_linear;
    throw ContractError("unknown dynamic kind '" + name + "'");
}

void DynamicSpec::validate() const {
    if (steps < 1) throw ContractError("dynamic: steps must be >= 1");
    if (kind == DynamicKind::sgc && s < 1) throw ContractError("dynamic: sgc power s must be >= 1");
    if (kind == DynamicKind::dmdpp && !(alpha >= 0.0 && alpha <= 1.0)) {
        throw ContractError("dynamic: dmdpp alpha must lie in [0, 1]");
    }
    if (kind == DynamicKind::acmp && !(b >= 0.0 && std::isfinite(b))) {
        throw ContractError("dynamic: acmp b must be finite and >= 0");
    }
    if (kind == DynamicKind::heat && !std::isfinite(tau)) {
        throw ContractError("dynamic: heat tau must be finite");
    }
    if (kind == DynamicKind::custom_linear && (op.rows() != op.cols() || op.size() == 0)) {
        throw ContractError("dynamic: custom_linear needs a non-empty square operator");
    }
}

void to_json(nlohmann::json& j, const DynamicSpec& spec) {
    j = nlohmann::json{{"kind", to_string(spec.kind)}, {"steps", spec.steps}};
    switch (spec.kind) {
        case DynamicKind::sgc: j["s"] = spec.s; break;
        case DynamicKind::dmdpp: j["alpha"] = spec.alpha; break;
        case DynamicKind::acmp: j["b"] = spec.b; break;
        case DynamicKind::heat: j["tau"] = spec.tau; break;
        case DynamicKind::custom_linear: {
            nlohmann::json rows = nlohmann::json::array();
            for (Eigen::Index i = 0; i < spec.op.rows(); ++i) {
                nlohmann::json row = nlohmann::json::array();
                for (Eigen::Index k = 0; k < spec.op.cols(); ++k) row.push_back(spec.op(i, k));
                rows.push_back(std::move(row));
            }
            j["op"] = std::move(rows);
            break;
        }
        case DynamicKind::gcn: break;
    }
}

void from_json(const nlohmann::json& j, DynamicSpec& spec) {
    spec = DynamicSpec{};
    spec.kind = dynamic_kind_from_string(j.at("kind").get<std::string>());
    spec.steps = j.value("steps", 1);
    spec.s = j.value("s", 2);
    spec.alpha = j.value("alpha", 0.5);
    spec.b = j.value("b", 0.0);
    spec.tau = j.value("tau", 1.0);
    if (j.contains("op")) {
        const auto& rows = j.at("op");
        const auto n = static_cast<Eigen::Index>(rows.size());
        spec.op.resize(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& row = rows.at(static_cast<std::size_t>(i));
            if (static_cast<Eigen::Index>(row.size()) != n) {
                throw ContractError("dynamic: custom_linear op must be square");
            }
            for (Eigen::Index k = 0; k < n; ++k) spec.op(i, k) = row.at(static_cast<std::size_t>(k)).get<double>();
        }
    }
    spec.validate();
}

Matrix heat_kernel(const Matrix& adj, double tau) {
    const Eigen::Index n = adj.rows();
    const Matrix lap = Matrix::Identity(n, n) - adj;
    const SymmetricEig eig = eig_symmetric(lap);
    const Vector decay = (-tau * eig.values.array()).exp();
    return eig.vectors * decay.asDiagonal() * eig.vectors.transpose();
}

Matrix effective_operator(const DynamicSpec& spec, const Matrix& adj) {
    spec.validate();
    const Eigen::Index n = adj.rows();
    switch (spec.kind) {
        case DynamicKind::gcn: return adj;
        case DynamicKind::sgc: return matrix_power_apply(adj, Matrix::Identity(n, n), spec.s);
        case DynamicKind::dmdpp:
            return spec.alpha * (adj * adj) + (1.0 - spec.alpha) * Matrix::Identity(n, n);
        case DynamicKind::heat: return heat_kernel(adj, spec.tau);
        case DynamicKind::custom_linear:
            if (spec.op.rows() != n) throw ContractError("effective_operator: custom op size mismatch");
            return spec.op;
        case DynamicKind::acmp: break;
    }
    throw ContractError("effective_operator: acmp is nonlinear");
}

Matrix step(const DynamicSpec& spec, const Matrix& adj, const Matrix& h) {
    spec.validate();
    require_square_match(adj, h, "step");
    switch (spec.kind) {
        case DynamicKind::gcn: return adj * h;
        case DynamicKind::sgc: return matrix_power_apply(adj, h, spec.s);
        case DynamicKind::dmdpp: return spec.alpha * (adj * (adj * h)) + (1.0 - spec.alpha) * h;
        case DynamicKind::acmp: return acmp_step(adj, h, spec.b);
        case DynamicKind::heat: return heat_kernel(adj, spec.tau) * h;
        case DynamicKind::custom_linear:
            if (spec.op.rows() != h.rows()) throw ContractError("step: custom op size mismatch");
            return spec.op * h;
    }
    throw ContractError("step: unknown dynamic");
}

std::vector<Matrix> rollout(const DynamicSpec& spec, const Matrix& adj, const Matrix& h0) {
    spec.validate();
    require_square_match(adj, h0, "rollout");
    std::vector<Matrix> traj;
    traj.reserve(static_cast<std::size_t>(spec.steps) + 1);
    traj.push_back(h0);
    // The heat propagator is the same every step; build it once.
    Matrix heat;
    if (spec.kind == DynamicKind::heat) heat = heat_kernel(adj, spec.tau);
    for (int k = 0; k < spec.steps; ++k) {
        Matrix next = spec.kind == DynamicKind::heat ? Matrix(heat * traj.back())
                                                     : step(spec, adj, traj.back());
        if (!next.allFinite() || (next.size() && next.cwiseAbs().maxCoeff() > kDivergenceLimit)) {
            throw DivergenceError("rollout: " + to_string(spec.kind) + " dynamic diverged at step " +
                                      std::to_string(k + 1),
                                  k + 1);
        }
        traj.push_back(std::move(next));
    }
    return traj;
}

SnapshotPair snapshots_from_trajectory(const std::vector<Matrix>& trajectory,
                                       std::optional<DynamicSpec> meta) {
    if (trajectory.size() < 2) {
        throw ContractError("snapshots_from_trajectory: need at least two states");
    }
    const Eigen::Index n = trajectory.front().rows();
    const Eigen::Index d = trajectory.front().cols();
    const auto pairs = static_cast<Eigen::Index>(trajectory.size() - 1);
    SnapshotPair out;
    out.x.resize(n, pairs * d);
    out.y.resize(n, pairs * d);
    for (Eigen::Index k = 0; k < pairs; ++k) {
        const Matrix& cur = trajectory[static_cast<std::size_t>(k)];
        const Matrix& nxt = trajectory[static_cast<std::size_t>(k + 1)];
        if (cur.rows() != n || cur.cols() != d || nxt.rows() != n || nxt.cols() != d) {
            throw ContractError("snapshots_from_trajectory: states differ in shape");
        }
        out.x.middleCols(k * d, d) = cur;
        out.y.middleCols(k * d, d) = nxt;
    }
    out.meta = std::move(meta);
    return out;
}

double linear_residual(const SnapshotPair& pair, const Matrix& op) {
    if (op.cols() != pair.x.rows() || op.rows() != pair.y.rows()) {
        throw ContractError("linear_residual: operator shape mismatch");
    }
    const Matrix r = pair.y - op * pair.x;
    return r.size() ? r.cwiseAbs().maxCoeff() : 0.0;
}

}  // namespace koopgraph
