#include "koopgraph/error.hpp"
#include "koopgraph/tasks.hpp"
#include "training.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace koopgraph {

int NodeClassDataset::num_classes() const {
    if (labels.empty()) return 0;
    return *std::max_element(labels.begin(), labels.end()) + 1;
}

void NodeClassDataset::validate() const {
    const int n = graph.num_nodes();
    if (features.rows() != n) {
        throw ContractError("dataset: " + std::to_string(features.rows()) + " feature rows for " +
                            std::to_string(n) + " nodes");
    }
    if (static_cast<int>(labels.size()) != n) {
        throw ContractError("dataset: label count does not match node count");
    }
    for (const int l : labels) {
        if (l < 0) throw ContractError("dataset: negative label");
    }
    std::set<int> seen;
    for (const auto* mask : {&masks.train, &masks.val, &masks.test}) {
        for (const int i : *mask) {
            if (i < 0 || i >= n) throw ContractError("dataset: split index outside [0, N)");
            if (!seen.insert(i).second) {
                throw ContractError("dataset: node " + std::to_string(i) + " appears in two splits");
            }
        }
    }
    if (masks.train.empty()) throw ContractError("dataset: empty training split");
}

Matrix row_normalize(const Matrix& features) {
    Matrix out = features;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double s = out.row(i).cwiseAbs().sum();
        if (s > 0.0) out.row(i) /= s;
    }
    return out;
}

SplitMasks random_split(int n, double train_frac, double val_frac, std::uint64_t seed) {
    if (!(train_frac > 0.0 && val_frac >= 0.0 && train_frac + val_frac <= 1.0)) {
        throw ContractError("random_split: fractions must be non-negative and sum to at most 1");
    }
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng = make_stream(seed, "split");
    for (std::size_t i = perm.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng() % i);
        std::swap(perm[i - 1], perm[j]);
    }
    const auto n_train = static_cast<std::size_t>(train_frac * n + 0.5);
    const auto n_val = static_cast<std::size_t>(val_frac * n + 0.5);
    SplitMasks masks;
    masks.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    masks.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                     perm.begin() + static_cast<std::ptrdiff_t>(std::min(perm.size(), n_train + n_val)));
    masks.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(std::min(perm.size(), n_train + n_val)),
                      perm.end());
    for (auto* m : {&masks.train, &masks.val, &masks.test}) std::sort(m->begin(), m->end());
    return masks;
}

NodeClassResult run_node_classification(const NodeClassDataset& dataset, const DynamicSpec& dynamic,
                                        const DmdStage& stage, const ModelSpec& spec) {
    dataset.validate();
    spec.train.validate();
    NodeClassResult result;
    try {
        const Matrix adj = propagation_operator(dataset.graph, stage);
        const auto traj = rollout(dynamic, adj, dataset.features);
        result.dmd = fit_modes(snapshots_from_trajectory(traj, dynamic), stage);
    } catch (const DegenerateInputError& e) {
        throw DegenerateInputError(std::string("node classification: ") + e.what());
    }
    Rng init = make_stream(spec.train.seed, "init");
    const auto dims = detail::layer_dims(static_cast<int>(dataset.features.cols()), spec, dataset.num_classes());
    result.model = DmdGnnModel(spec.arch, result.dmd.modes, dims, spec.train.dropout, init);
    auto fit = detail::train_classifier(result.model, dataset, spec.train);
    result.train = fit.train;
    result.val = fit.val;
    result.test = fit.test;
    result.best_epoch = fit.best_epoch;
    result.history = std::move(fit.history);
    return result;
}

BaselineResult run_baseline_node_classification(const NodeClassDataset& dataset, BaselineKind kind,
                                                const TrainConfig& train) {
    dataset.validate();
    Rng init = make_stream(train.seed, "init");
    const int d = static_cast<int>(dataset.features.cols());
    const int c = dataset.num_classes();
    std::vector<int> dims = kind == BaselineKind::logistic ? std::vector<int>{d, c}
                                                           : std::vector<int>{d, train.hidden_dim, c};
    Matrix propagation;
    if (kind == BaselineKind::gcn) propagation = normalized_adjacency(dataset.graph, true);
    DenseChainModel model(dims, train.dropout, init, std::move(propagation));
    const auto fit = detail::train_classifier(model, dataset, train);
    return {fit.train, fit.val, fit.test, fit.best_epoch};
}

NodeClassDataset make_sbm_dataset(const SbmDatasetOptions& options, std::uint64_t seed) {
    if (options.feature_dim < 1) throw ContractError("sbm dataset: feature_dim must be >= 1");
    LabeledGraph lg = sbm_generate(options.n, options.blocks, options.p_in, options.p_out, seed);
    Rng rng = make_stream(seed, "features");
    Matrix means(options.blocks, options.feature_dim);
    for (Eigen::Index c = 0; c < means.rows(); ++c) {
        for (Eigen::Index j = 0; j < means.cols(); ++j) means(c, j) = standard_normal(rng);
        means.row(c) *= options.class_separation / means.row(c).norm();
    }
    Matrix x(options.n, options.feature_dim);
    for (int i = 0; i < options.n; ++i) {
        const int c = lg.labels[static_cast<std::size_t>(i)];
        for (int j = 0; j < options.feature_dim; ++j) {
            x(i, j) = means(c, j) + options.noise * standard_normal(rng);
        }
    }
    NodeClassDataset ds;
    ds.graph = std::move(lg.graph);
    ds.labels = std::move(lg.labels);
    ds.features = options.normalize_features ? row_normalize(x) : x;
    ds.masks = random_split(options.n, options.train_frac, options.val_frac, seed);
    return ds;
}

}  // namespace koopgraph
