#include "koopgraph/error.hpp"
#include "koopgraph/tasks.hpp"
#include "training.hpp"

#include <algorithm>

namespace koopgraph {

Matrix propagation_operator(const Graph& g, const DmdStage& stage) {
    if (stage.normalize_adjacency) return normalized_adjacency(g, stage.self_loops);
    Matrix a = g.adjacency();
    if (stage.self_loops) a.diagonal().array() += 1.0;
    return a;
}

DmdResult fit_modes(const SnapshotPair& pair, const DmdStage& stage) {
    if (!stage.constraint) return dmd_fit(pair, stage.truncation, stage.mode_kind);
    const Matrix k = pidmd_fit(pair, *stage.constraint);
    const SvdFactors f = svd(pair.x);
    const int r = resolve_rank(f.sigma, stage.truncation, f.sigma.size());
    DmdResult out = modes_from_operator(k, r);
    out.sing_values = f.sigma;
    out.mode_kind = stage.mode_kind;
    const double total = f.sigma.squaredNorm();
    const int kept = std::min<int>(out.rank, static_cast<int>(f.sigma.size()));
    out.energy_captured = total > 0.0 ? f.sigma.head(kept).squaredNorm() / total : 0.0;
    if (stage.truncation.kind == Truncation::Kind::energy) out.requested_xi = stage.truncation.xi;
    return out;
}

double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size()) throw ContractError("accuracy: length mismatch");
    if (pred.empty()) return 0.0;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == truth[i];
    return static_cast<double>(hit) / static_cast<double>(pred.size());
}

double metrics_macro_f1(const std::vector<int>& pred, const std::vector<int>& truth, int n_classes) {
    if (pred.size() != truth.size()) throw ContractError("macro_f1: length mismatch");
    std::vector<double> tp(static_cast<std::size_t>(n_classes), 0.0);
    std::vector<double> fp(tp.size(), 0.0);
    std::vector<double> fn(tp.size(), 0.0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const int p = pred[i];
        const int t = truth[i];
        if (p < 0 || p >= n_classes || t < 0 || t >= n_classes) {
            throw ContractError("macro_f1: label outside [0, C)");
        }
        if (p == t) {
            tp[static_cast<std::size_t>(p)] += 1.0;
        } else {
            fp[static_cast<std::size_t>(p)] += 1.0;
            fn[static_cast<std::size_t>(t)] += 1.0;
        }
    }
    double sum = 0.0;
    int counted = 0;
    for (std::size_t c = 0; c < tp.size(); ++c) {
        const double den = 2.0 * tp[c] + fp[c] + fn[c];
        if (den == 0.0) continue;  // absent from truth and never predicted
        sum += 2.0 * tp[c] / den;
        ++counted;
    }
    return counted ? sum / counted : 0.0;
}

std::vector<int> argmax_rows(const Matrix& logits) {
    std::vector<int> out(static_cast<std::size_t>(logits.rows()));
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        Eigen::Index best = 0;
        logits.row(i).maxCoeff(&best);
        out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
}

namespace detail {

std::vector<Matrix> snapshot_params(TrainableModel& model) {
    std::vector<Matrix> out;
    for (const auto& p : model.parameters()) out.push_back(*p.value);
    return out;
}

void restore_params(TrainableModel& model, const std::vector<Matrix>& values) {
    auto params = model.parameters();
    for (std::size_t k = 0; k < params.size(); ++k) *params[k].value = values[k];
}

AdamOptions adam_options(const TrainConfig& cfg) {
    AdamOptions opt;
    opt.lr = cfg.lr;
    opt.weight_decay = cfg.weight_decay;
    return opt;
}

std::vector<int> layer_dims(int input, const ModelSpec& spec, int output) {
    std::vector<int> dims{input};
    for (int i = 0; i < spec.hidden_layers; ++i) dims.push_back(spec.train.hidden_dim);
    dims.push_back(output);
    return dims;
}

namespace {

SplitMetrics split_metrics(const std::vector<int>& pred, const std::vector<int>& labels,
                           const std::vector<int>& rows, int n_classes) {
    std::vector<int> p;
    std::vector<int> t;
    for (const int r : rows) {
        p.push_back(pred[static_cast<std::size_t>(r)]);
        t.push_back(labels[static_cast<std::size_t>(r)]);
    }
    return {accuracy(p, t), metrics_macro_f1(p, t, n_classes)};
}

}  // namespace

ClassifierFit train_classifier(TrainableModel& model, const NodeClassDataset& dataset, const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.loss != LossKind::ce && cfg.loss != LossKind::wce) {
        throw ContractError("node classification trains with ce or wce");
    }
    const int classes = dataset.num_classes();
    LossTargets targets;
    targets.labels = dataset.labels;
    targets.rows = dataset.masks.train;
    if (cfg.loss == LossKind::wce) {
        targets.class_weights = inverse_frequency_weights(dataset.labels, dataset.masks.train, classes);
    }
    const AdamOptions opt = adam_options(cfg);
    AdamState state;
    Rng dropout = make_stream(cfg.seed, "dropout");

    ClassifierFit fit;
    double best_val = -1.0;
    std::vector<Matrix> best_params;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const Matrix out = model.forward(dataset.features, true, &dropout);
        const LossResult loss = loss_and_grad(cfg.loss, out, targets);
        const auto grads = model.backward(loss.grad);
        adam_step(model.parameters(), grads, state, opt);

        const auto pred = argmax_rows(model.forward(dataset.features, false, nullptr));
        const double val = split_metrics(pred, dataset.labels, dataset.masks.val, classes).accuracy;
        const double test = split_metrics(pred, dataset.labels, dataset.masks.test, classes).accuracy;
        fit.history.push_back({epoch, loss.loss, val, test});
        if (val > best_val) {
            best_val = val;
            fit.best_epoch = epoch;
            best_params = snapshot_params(model);
        }
    }
    restore_params(model, best_params);
    const auto pred = argmax_rows(model.forward(dataset.features, false, nullptr));
    fit.train = split_metrics(pred, dataset.labels, dataset.masks.train, classes);
    fit.val = split_metrics(pred, dataset.labels, dataset.masks.val, classes);
    fit.test = split_metrics(pred, dataset.labels, dataset.masks.test, classes);
    return fit;
}

}  // namespace detail

}  // namespace koopgraph
