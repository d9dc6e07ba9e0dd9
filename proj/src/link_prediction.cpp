#include "koopgraph/error.hpp"
#include "koopgraph/tasks.hpp"
#include "training.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace koopgraph {

namespace {

NodePair canonical(int u, int v) {
    return u < v ? NodePair{u, v} : NodePair{v, u};
}

std::vector<NodePair> undirected_edges(const Graph& g) {
    std::set<NodePair> seen;
    std::vector<NodePair> out;
    for (const Edge& e : g.edges()) {
        if (e.src == e.dst) continue;
        const NodePair p = canonical(e.src, e.dst);
        if (seen.insert(p).second) out.push_back(p);
    }
    return out;
}

std::vector<NodePair> all_positives(const LinkPredDataset& ds) {
    std::vector<NodePair> out = ds.pos.train;
    out.insert(out.end(), ds.pos.val.begin(), ds.pos.val.end());
    out.insert(out.end(), ds.pos.test.begin(), ds.pos.test.end());
    return out;
}

}  // namespace

Graph LinkPredDataset::train_graph() const {
    std::vector<Edge> edges;
    edges.reserve(pos.train.size());
    for (const auto& [u, v] : pos.train) edges.push_back({u, v, 1.0});
    return Graph(graph.num_nodes(), std::move(edges), false);
}

void LinkPredDataset::validate() const {
    if (features.rows() != graph.num_nodes()) {
        throw ContractError("link dataset: feature rows do not match node count");
    }
    if (neg.val.size() != pos.val.size() || neg.test.size() != pos.test.size()) {
        throw ContractError("link dataset: negatives must be count-matched with positives");
    }
    std::set<NodePair> positives;
    for (const auto& p : all_positives(*this)) positives.insert(canonical(p.first, p.second));
    for (const auto* split : {&neg.train, &neg.val, &neg.test}) {
        for (const auto& p : *split) {
            if (positives.count(canonical(p.first, p.second))) {
                throw ContractError("link dataset: a negative pair is a true edge");
            }
        }
    }
    if (pos.train.empty()) throw ContractError("link dataset: no training edges");
}

std::vector<NodePair> sample_negatives(int n, std::size_t count, const std::vector<NodePair>& forbidden,
                                       Rng& rng) {
    std::set<NodePair> blocked;
    for (const auto& p : forbidden) blocked.insert(canonical(p.first, p.second));
    std::vector<NodePair> out;
    out.reserve(count);
    const std::size_t max_rejections = 100 * std::max<std::size_t>(count, 1);
    std::size_t rejections = 0;
    const auto un = static_cast<std::uint64_t>(n);
    while (out.size() < count) {
        const int u = static_cast<int>(rng() % un);
        const int v = static_cast<int>(rng() % un);
        const NodePair p = canonical(u, v);
        if (u == v || !blocked.insert(p).second) {
            if (++rejections > max_rejections) {
                throw DegenerateInputError("negative sampling exhausted: graph too dense to draw " +
                                           std::to_string(count) + " non-edges");
            }
            continue;
        }
        out.push_back(p);
    }
    return out;
}

LinkPredDataset make_link_dataset(const Graph& graph, const Matrix& features, std::uint64_t seed) {
    std::vector<NodePair> edges = undirected_edges(graph);
    Rng rng = make_stream(seed, "linksplit");
    for (std::size_t i = edges.size(); i > 1; --i) {
        std::swap(edges[i - 1], edges[static_cast<std::size_t>(rng() % i)]);
    }
    const auto total = edges.size();
    const auto n_val = static_cast<std::size_t>(std::llround(0.05 * static_cast<double>(total)));
    const auto n_test = static_cast<std::size_t>(std::llround(0.10 * static_cast<double>(total)));
    LinkPredDataset ds;
    ds.graph = graph;
    ds.features = features;
    ds.pos.val.assign(edges.begin(), edges.begin() + static_cast<std::ptrdiff_t>(n_val));
    ds.pos.test.assign(edges.begin() + static_cast<std::ptrdiff_t>(n_val),
                       edges.begin() + static_cast<std::ptrdiff_t>(n_val + n_test));
    ds.pos.train.assign(edges.begin() + static_cast<std::ptrdiff_t>(n_val + n_test), edges.end());

    Rng neg_rng = make_stream(seed, "negsample_eval");
    auto negs = sample_negatives(graph.num_nodes(), n_val + n_test, edges, neg_rng);
    ds.neg.val.assign(negs.begin(), negs.begin() + static_cast<std::ptrdiff_t>(n_val));
    ds.neg.test.assign(negs.begin() + static_cast<std::ptrdiff_t>(n_val), negs.end());
    ds.validate();
    return ds;
}

double link_score(const Matrix& embeddings, int u, int v) {
    const double s = embeddings.row(u).dot(embeddings.row(v));
    return 1.0 / (1.0 + std::exp(-s));
}

double link_accuracy(const Matrix& embeddings, const std::vector<NodePair>& pos,
                     const std::vector<NodePair>& neg) {
    const std::size_t total = pos.size() + neg.size();
    if (total == 0) return 0.0;
    std::size_t hit = 0;
    for (const auto& [u, v] : pos) hit += link_score(embeddings, u, v) >= 0.5;
    for (const auto& [u, v] : neg) hit += link_score(embeddings, u, v) < 0.5;
    return static_cast<double>(hit) / static_cast<double>(total);
}

LinkPredResult run_link_prediction(const LinkPredDataset& dataset, const DynamicSpec& dynamic,
                                   const DmdStage& stage, const ModelSpec& spec) {
    dataset.validate();
    spec.train.validate();
    LinkPredResult result;
    try {
        const Matrix adj = propagation_operator(dataset.train_graph(), stage);
        const auto traj = rollout(dynamic, adj, dataset.features);
        result.dmd = fit_modes(snapshots_from_trajectory(traj, dynamic), stage);
    } catch (const DegenerateInputError& e) {
        throw DegenerateInputError(std::string("link prediction: ") + e.what());
    }
    Rng init = make_stream(spec.train.seed, "init");
    const auto dims = detail::layer_dims(static_cast<int>(dataset.features.cols()), spec, spec.embedding_dim);
    result.model = DmdGnnModel(spec.arch, result.dmd.modes, dims, spec.train.dropout, init);

    const AdamOptions opt = detail::adam_options(spec.train);
    AdamState state;
    Rng dropout = make_stream(spec.train.seed, "dropout");
    Rng negsample = make_stream(spec.train.seed, "negsample");
    const auto positives = all_positives(dataset);
    const int n = dataset.graph.num_nodes();

    double best_val = -1.0;
    std::vector<Matrix> best_params;
    for (int epoch = 1; epoch <= spec.train.epochs; ++epoch) {
        const Matrix z = result.model.forward(dataset.features, true, &dropout);
        const auto negs = sample_negatives(n, dataset.pos.train.size(), positives, negsample);
        std::vector<NodePair> pairs = dataset.pos.train;
        pairs.insert(pairs.end(), negs.begin(), negs.end());
        Matrix scores(static_cast<Eigen::Index>(pairs.size()), 1);
        LossTargets targets;
        targets.values = Matrix::Zero(scores.rows(), 1);
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            const auto i = static_cast<Eigen::Index>(k);
            scores(i, 0) = z.row(pairs[k].first).dot(z.row(pairs[k].second));
            targets.values(i, 0) = k < dataset.pos.train.size() ? 1.0 : 0.0;
        }
        const LossResult loss = loss_and_grad(LossKind::bce, scores, targets);
        Matrix dz = Matrix::Zero(z.rows(), z.cols());
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            const double g = loss.grad(static_cast<Eigen::Index>(k), 0);
            const auto [u, v] = pairs[k];
            dz.row(u) += g * z.row(v);
            dz.row(v) += g * z.row(u);
        }
        adam_step(result.model.parameters(), result.model.backward(dz), state, opt);

        const Matrix eval = result.model.forward(dataset.features, false, nullptr);
        const double val = link_accuracy(eval, dataset.pos.val, dataset.neg.val);
        const double test = link_accuracy(eval, dataset.pos.test, dataset.neg.test);
        result.history.push_back({epoch, loss.loss, val, test});
        if (val > best_val) {
            best_val = val;
            result.best_epoch = epoch;
            best_params = detail::snapshot_params(result.model);
        }
    }
    detail::restore_params(result.model, best_params);
    const Matrix eval = result.model.forward(dataset.features, false, nullptr);
    Rng train_eval = make_stream(spec.train.seed, "negsample_train_eval");
    const auto train_negs = sample_negatives(n, dataset.pos.train.size(), positives, train_eval);
    result.train_accuracy = link_accuracy(eval, dataset.pos.train, train_negs);
    result.val_accuracy = link_accuracy(eval, dataset.pos.val, dataset.neg.val);
    result.test_accuracy = link_accuracy(eval, dataset.pos.test, dataset.neg.test);
    return result;
}

}  // namespace koopgraph
