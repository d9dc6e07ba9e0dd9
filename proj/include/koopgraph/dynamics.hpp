#pragma once

#include "koopgraph/kernels.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace koopgraph {

enum class DynamicKind { gcn, sgc, dmdpp, acmp, heat, custom_linear };

std::string to_string(DynamicKind kind);
DynamicKind dynamic_kind_from_string(const std::string& name);

/// Initial feature dynamic that produces the snapshots DMD consumes.
struct DynamicSpec {
    DynamicKind kind = DynamicKind::gcn;
    int s = 2;           // sgc power
    double alpha = 0.5;  // dmdpp mix between two-hop diffusion and identity
    double b = 0.0;      // acmp: value of B on the support of A-hat
    double tau = 1.0;    // heat kernel time
    Matrix op;           // custom_linear operator
    int steps = 1;

    /// Throws ContractError when a field is outside its documented range.
    void validate() const;

    bool is_linear() const noexcept { return kind != DynamicKind::acmp; }
};

void to_json(nlohmann::json& j, const DynamicSpec& spec);
void from_json(const nlohmann::json& j, DynamicSpec& spec);

/// Entries above this magnitude abort a rollout.
inline constexpr double kDivergenceLimit = 1e6;

/// One application of the dynamic to h (N x d).
Matrix step(const DynamicSpec& spec, const Matrix& adj, const Matrix& h);

/// [h0, step(h0), ..., step^steps(h0)]. Throws DivergenceError naming the
/// first step whose state is non-finite or exceeds kDivergenceLimit.
std::vector<Matrix> rollout(const DynamicSpec& spec, const Matrix& adj, const Matrix& h0);

/// The matrix M with step(h) == M h, for linear kinds only.
Matrix effective_operator(const DynamicSpec& spec, const Matrix& adj);

/// exp(-tau * (I - adj)) by symmetric eigendecomposition.
Matrix heat_kernel(const Matrix& adj, double tau);

struct SnapshotPair {
    Matrix x;  // N x m, states
    Matrix y;  // N x m, next states
    std::optional<DynamicSpec> meta;
};

/// Column (k * d + j) of x is feature j of trajectory[k]; y is shifted by one step.
SnapshotPair snapshots_from_trajectory(const std::vector<Matrix>& trajectory,
                                       std::optional<DynamicSpec> meta = std::nullopt);

/// max |y - op x| over entries, for checking linear snapshot pairs.
double linear_residual(const SnapshotPair& pair, const Matrix& op);

}  // namespace koopgraph
