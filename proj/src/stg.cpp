#include "koopgraph/error.hpp"
#include "koopgraph/tasks.hpp"
#include "training.hpp"

#include <algorithm>
#include <cmath>

namespace koopgraph {

namespace {

struct Window {
    Matrix input;   // N x lags
    Matrix target;  // N x horizon
};

Window make_window(const Matrix& z, int t, int lags, int horizon) {
    // z is T x N; t is the last observed row.
    Window w;
    w.input = z.middleRows(t - lags + 1, lags).transpose();
    w.target = z.middleRows(t + 1, horizon).transpose();
    return w;
}

double target_variance(const std::vector<Window>& windows) {
    double sum = 0.0;
    double sq = 0.0;
    double count = 0.0;
    for (const auto& w : windows) {
        sum += w.target.sum();
        sq += w.target.squaredNorm();
        count += static_cast<double>(w.target.size());
    }
    if (count == 0.0) return 1.0;
    const double mean = sum / count;
    const double var = sq / count - mean * mean;
    return var > 0.0 ? var : 1.0;
}

double standardized_mse(DmdGnnModel& model, const std::vector<Window>& windows) {
    if (windows.empty()) return 0.0;
    double err = 0.0;
    double count = 0.0;
    for (const auto& w : windows) {
        err += (model.forward(w.input, false, nullptr) - w.target).squaredNorm();
        count += static_cast<double>(w.target.size());
    }
    return err / count / target_variance(windows);
}

}  // namespace

void StgDataset::validate() const {
    if (lags < 1 || horizon < 1) throw ContractError("stg dataset: lags and horizon must be >= 1");
    if (signal.cols() != graph.num_nodes()) {
        throw ContractError("stg dataset: signal has " + std::to_string(signal.cols()) + " columns for " +
                            std::to_string(graph.num_nodes()) + " nodes");
    }
    if (signal.rows() < lags + horizon + 4) {
        throw ContractError("stg dataset: signal too short for the requested lags and horizon");
    }
    if (!all_finite(signal)) throw ContractError("stg dataset: signal contains non-finite values");
}

StgResult run_stg_forecast(const StgDataset& dataset, const DmdStage& stage, const ModelSpec& spec) {
    dataset.validate();
    spec.train.validate();
    if (spec.train.loss != LossKind::mse) throw ContractError("stg forecasting trains with mse");
    const int lags = dataset.lags;
    const int horizon = dataset.horizon;
    const int t_rows = static_cast<int>(dataset.signal.rows());
    const int n_windows = t_rows - lags - horizon + 1;
    const int n_test = std::max(1, static_cast<int>(std::lround(0.2 * n_windows)));
    const int n_train = n_windows - n_test;
    if (n_train < 1) throw ContractError("stg dataset: no training windows");

    // Rows touched by training windows: [0, last_train_row].
    const int last_train_row = (n_train - 1) + lags - 1 + horizon;
    const Matrix train_rows = dataset.signal.topRows(last_train_row + 1);
    const Eigen::RowVectorXd mean = train_rows.colwise().mean();
    Eigen::RowVectorXd scale = ((train_rows.rowwise() - mean).colwise().squaredNorm() /
                                static_cast<double>(train_rows.rows()))
                                   .cwiseSqrt();
    for (Eigen::Index j = 0; j < scale.size(); ++j) {
        if (!(scale(j) > 1e-12 * std::max(1.0, std::abs(mean(j))))) {
            throw DegenerateInputError("stg forecasting: node " + std::to_string(j) +
                                       " has zero variance over the training rows");
        }
    }
    const Matrix z = ((dataset.signal.rowwise() - mean).array().rowwise() / scale.array()).matrix();

    StgResult result;
    try {
        SnapshotPair pair;
        pair.x = z.topRows(last_train_row).transpose();
        pair.y = z.middleRows(1, last_train_row).transpose();
        result.dmd = fit_modes(pair, stage);
    } catch (const DegenerateInputError& e) {
        throw DegenerateInputError(std::string("stg forecasting: ") + e.what());
    }

    std::vector<Window> train;
    std::vector<Window> test;
    for (int k = 0; k < n_windows; ++k) {
        (k < n_train ? train : test).push_back(make_window(z, k + lags - 1, lags, horizon));
    }
    result.train_windows = n_train;
    result.test_windows = n_test;

    Rng init = make_stream(spec.train.seed, "init");
    const auto dims = detail::layer_dims(lags, spec, horizon);
    result.model = DmdGnnModel(spec.arch, result.dmd.modes, dims, spec.train.dropout, init);

    const AdamOptions opt = detail::adam_options(spec.train);
    AdamState state;
    Rng dropout = make_stream(spec.train.seed, "dropout");
    const double inv = 1.0 / static_cast<double>(train.size());
    for (int epoch = 1; epoch <= spec.train.epochs; ++epoch) {
        std::vector<Matrix> grads;
        double loss_sum = 0.0;
        for (const auto& w : train) {
            const Matrix out = result.model.forward(w.input, true, &dropout);
            LossTargets targets;
            targets.values = w.target;
            const LossResult loss = loss_and_grad(LossKind::mse, out, targets);
            loss_sum += loss.loss;
            auto g = result.model.backward(loss.grad * inv);
            if (grads.empty()) {
                grads = std::move(g);
            } else {
                for (std::size_t k = 0; k < grads.size(); ++k) grads[k] += g[k];
            }
        }
        adam_step(result.model.parameters(), grads, state, opt);
        result.history.push_back({epoch, loss_sum * inv, std::nullopt, standardized_mse(result.model, test)});
    }
    result.train_mse = standardized_mse(result.model, train);
    result.test_mse = standardized_mse(result.model, test);
    return result;
}

Matrix make_diffusion_signal(const Graph& graph, int steps, int burn_in, double noise, std::uint64_t seed) {
    if (steps < 1 || burn_in < 0 || noise < 0.0) {
        throw ContractError("diffusion signal: steps >= 1, burn_in >= 0 and noise >= 0 required");
    }
    const Matrix a = normalized_adjacency(graph, false);
    Rng rng = make_stream(seed, "signal");
    Vector s(graph.num_nodes());
    for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = uniform01(rng);
    for (int k = 0; k < burn_in; ++k) s = a * s;
    Matrix out(steps, graph.num_nodes());
    for (int t = 0; t < steps; ++t) {
        out.row(t) = s.transpose();
        s = a * s;
    }
    if (noise > 0.0) {
        for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] += noise * standard_normal(rng);
    }
    return out;
}

Matrix make_white_noise_signal(int nodes, int steps, std::uint64_t seed) {
    if (nodes < 1 || steps < 1) throw ContractError("white noise signal: nodes and steps must be >= 1");
    Rng rng = make_stream(seed, "signal");
    Matrix out(steps, nodes);
    for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = standard_normal(rng);
    return out;
}

}  // namespace koopgraph
