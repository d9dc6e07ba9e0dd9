#pragma once

#include "koopgraph/dmd.hpp"
#include "koopgraph/dynamics.hpp"
#include "koopgraph/graph.hpp"
#include "koopgraph/model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace koopgraph {

// ---------------------------------------------------------------------------
// Shared pipeline configuration.

/// How the propagation operator and DMD modes are produced.
struct DmdStage {
    Truncation truncation = Truncation::energy(0.85);
    ModeKind mode_kind = ModeKind::projected;
    /// When set, modes come from the leading eigenvectors of the constrained
    /// full-size operator instead of the reduced DMD operator.
    std::optional<PidmdConstraint> constraint;
    bool self_loops = false;
    bool normalize_adjacency = true;
};

struct ModelSpec {
    Arch arch = Arch::standard;
    int hidden_layers = 1;   // conv_first may use 0 (filter -> linear readout)
    int embedding_dim = 32;  // link prediction output width
    TrainConfig train;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    std::optional<double> val_metric;
    double test_metric = 0.0;
};

/// Propagation operator used by the dynamics (normalized or raw adjacency).
Matrix propagation_operator(const Graph& g, const DmdStage& stage);

/// rollout -> snapshots -> dmd_fit (or pidmd_fit + truncated eigendecomposition).
DmdResult fit_modes(const SnapshotPair& pair, const DmdStage& stage);

// ---------------------------------------------------------------------------
// Metrics.

double accuracy(const std::vector<int>& pred, const std::vector<int>& truth);

/// Unweighted mean of per-class F1. Classes that never occur in truth and are
/// never predicted are left out of the mean.
double metrics_macro_f1(const std::vector<int>& pred, const std::vector<int>& truth, int n_classes);

std::vector<int> argmax_rows(const Matrix& logits);

// ---------------------------------------------------------------------------
// Node classification.

struct SplitMasks {
    std::vector<int> train;
    std::vector<int> val;
    std::vector<int> test;
};

struct NodeClassDataset {
    Graph graph;
    Matrix features;  // N x d
    std::vector<int> labels;
    SplitMasks masks;

    int num_classes() const;
    /// Throws ContractError on overlapping masks, bad labels or shape mismatch.
    void validate() const;
};

/// Each row divided by the sum of its absolute values (zero rows untouched).
Matrix row_normalize(const Matrix& features);

/// Random disjoint split with the given train/val fractions; rest is test.
SplitMasks random_split(int n, double train_frac, double val_frac, std::uint64_t seed);

struct SplitMetrics {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
};

struct NodeClassResult {
    SplitMetrics train;
    SplitMetrics val;
    SplitMetrics test;
    int best_epoch = 0;
    DmdResult dmd;
    DmdGnnModel model;
    std::vector<EpochRecord> history;
};

NodeClassResult run_node_classification(const NodeClassDataset& dataset, const DynamicSpec& dynamic,
                                        const DmdStage& stage, const ModelSpec& spec);

enum class BaselineKind { logistic, mlp, gcn };

struct BaselineResult {
    SplitMetrics train;
    SplitMetrics val;
    SplitMetrics test;
    int best_epoch = 0;
};

/// Logistic regression on raw features, a plain MLP, or a two-layer GCN
/// with the self-looped normalized adjacency. Same training loop and model
/// selection as the DMD pipeline.
BaselineResult run_baseline_node_classification(const NodeClassDataset& dataset, BaselineKind kind,
                                                const TrainConfig& train);

struct SbmDatasetOptions {
    int n = 200;
    int blocks = 2;
    double p_in = 0.1;
    double p_out = 0.01;
    int feature_dim = 16;
    double class_separation = 1.0;  // norm scale of the class means
    double noise = 1.0;             // per-coordinate std of the feature noise
    double train_frac = 0.6;
    double val_frac = 0.2;
    bool normalize_features = true;
};

/// SBM graph with Gaussian class-mean features and a random split.
NodeClassDataset make_sbm_dataset(const SbmDatasetOptions& options, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Link prediction.

using NodePair = std::pair<int, int>;

struct EdgeSplit {
    std::vector<NodePair> train;
    std::vector<NodePair> val;
    std::vector<NodePair> test;
};

struct LinkPredDataset {
    Graph graph;  // full graph
    Matrix features;
    EdgeSplit pos;
    EdgeSplit neg;  // val/test negatives are frozen; train negatives are resampled per epoch

    /// Graph on the training positives only.
    Graph train_graph() const;
    void validate() const;
};

/// 85% / 5% / 10% split of the undirected edges with count-matched
/// negatives for validation and test.
LinkPredDataset make_link_dataset(const Graph& graph, const Matrix& features, std::uint64_t seed);

/// Uniform non-edges (u < v) outside `forbidden`, no repeats. Gives up after
/// 100 * count rejected draws with a DegenerateInputError.
std::vector<NodePair> sample_negatives(int n, std::size_t count, const std::vector<NodePair>& forbidden,
                                       Rng& rng);

/// sigmoid(<z_u, z_v>)
double link_score(const Matrix& embeddings, int u, int v);

/// Threshold-0.5 accuracy over positive and negative pairs.
double link_accuracy(const Matrix& embeddings, const std::vector<NodePair>& pos,
                     const std::vector<NodePair>& neg);

struct LinkPredResult {
    double train_accuracy = 0.0;
    double val_accuracy = 0.0;
    double test_accuracy = 0.0;
    int best_epoch = 0;
    DmdResult dmd;
    DmdGnnModel model;
    std::vector<EpochRecord> history;
};

LinkPredResult run_link_prediction(const LinkPredDataset& dataset, const DynamicSpec& dynamic,
                                   const DmdStage& stage, const ModelSpec& spec);

// ---------------------------------------------------------------------------
// Spatio-temporal forecasting.

struct StgDataset {
    Graph graph;
    Matrix signal;  // T x N
    int lags = 4;
    int horizon = 1;

    void validate() const;
};

struct StgResult {
    double train_mse = 0.0;  // standardized by the target variance
    double test_mse = 0.0;
    int train_windows = 0;
    int test_windows = 0;
    DmdResult dmd;
    DmdGnnModel model;
    std::vector<EpochRecord> history;
};

/// Lagged node values in, next `horizon` values out. Windows are split
/// chronologically (last 20% test); values are z-scored per node with
/// statistics from the training rows; DMD is fit on consecutive training
/// signal columns.
StgResult run_stg_forecast(const StgDataset& dataset, const DmdStage& stage, const ModelSpec& spec);

/// s_{t+1} = A-hat s_t from a random non-negative start, after `burn_in`
/// discarded steps, plus optional Gaussian observation noise.
Matrix make_diffusion_signal(const Graph& graph, int steps, int burn_in, double noise, std::uint64_t seed);

Matrix make_white_noise_signal(int nodes, int steps, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Free-particle Schroedinger demo on a chain graph.

struct SchrodingerSetup {
    int n_nodes = 100;
    double x0 = 2.0;
    double dx = 0.1;
    double width = 0.5;                // Gaussian envelope std
    double wavenumber = 0.7853981633974483;  // pi/4 per lattice spacing
    double dt = 0.01;
    int steps = 300;
    int holdout = 50;                  // trailing pairs kept out of the fits
    double hbar = 1.0;
    double mass = 1.0;
    PidmdConstraint constraint = PidmdConstraint::orthogonal();
    /// Add 2n random states and their one-step images to the unconstrained
    /// fit; a single wave-packet trajectory is far too ill-conditioned to
    /// span the state space.
    bool spanning_snapshots = true;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SchrodingerReport {
    std::string constraint;
    double truth_norm_drift = 0.0;   // max | ||z_t|| - ||z_0|| | over the truth
    double dmd_onestep_err = 0.0;    // max relative one-step error on held-out pairs
    double pidmd_rollout_err = 0.0;  // max relative error of the constrained rollout
    double pidmd_norm_drift = 0.0;   // max relative norm change of that rollout
    Matrix truth;                    // 2n x (steps + 1), columns Re psi ; Im psi
    Matrix reconstruction;           // 2n x (holdout + 1), constrained rollout
};

SchrodingerReport schrodinger_demo(const SchrodingerSetup& setup);

}  // namespace koopgraph
