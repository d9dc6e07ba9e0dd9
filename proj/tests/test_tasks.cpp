#include "test_support.hpp"

#include "koopgraph/error.hpp"
#include "koopgraph/tasks.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace koopgraph;
using namespace koopgraph::testing;

namespace {

DynamicSpec gcn_dynamic(int steps) {
    DynamicSpec s;
    s.kind = DynamicKind::gcn;
    s.steps = steps;
    return s;
}

ModelSpec small_model(int epochs, LossKind loss = LossKind::ce) {
    ModelSpec m;
    m.train.epochs = epochs;
    m.train.hidden_dim = 16;
    m.train.loss = loss;
    return m;
}

// Disjoint cliques; features are the cluster indicator.
std::pair<Graph, Matrix> clustered_graph(int clusters, int size) {
    std::vector<Edge> edges;
    for (int c = 0; c < clusters; ++c) {
        for (int i = 0; i < size; ++i) {
            for (int j = i + 1; j < size; ++j) edges.push_back({c * size + i, c * size + j, 1.0});
        }
    }
    Matrix x = Matrix::Zero(clusters * size, clusters);
    for (int v = 0; v < clusters * size; ++v) x(v, v / size) = 1.0;
    return {Graph(clusters * size, std::move(edges)), x};
}

}  // namespace

TEST_CASE("accuracy and macro-F1 against hand-computed confusion matrices") {
    CHECK(accuracy({0, 1, 1, 0}, {0, 1, 0, 0}) == doctest::Approx(0.75));
    CHECK(metrics_macro_f1({0, 1, 2}, {0, 1, 2}, 3) == doctest::Approx(1.0));
    // Class 0: tp 2, fp 2, fn 0 -> F1 2/3. Class 1 never predicted -> 0.
    CHECK(metrics_macro_f1({0, 0, 0, 0}, {0, 0, 1, 1}, 2) == doctest::Approx(1.0 / 3.0));
    // Class 2 absent from truth and predictions is excluded.
    CHECK(metrics_macro_f1({1, 1, 1}, {1, 1, 1}, 3) == doctest::Approx(1.0));
    // Class 1: tp 1, fp 0, fn 1 -> 2/3; class 0: tp 1, fp 1, fn 0 -> 2/3.
    CHECK(metrics_macro_f1({0, 0, 1}, {0, 1, 1}, 2) == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS_AS(metrics_macro_f1({0, 3}, {0, 1}, 2), ContractError);
    CHECK_THROWS_AS(accuracy({0}, {0, 1}), ContractError);
}

TEST_CASE("macro-F1 matches a precision and recall oracle on random predictions") {
    Rng rng = make_stream(71, "test");
    for (int trial = 0; trial < 30; ++trial) {
        const int c = uniform_int(rng, 2, 5);
        const int n = uniform_int(rng, 5, 60);
        std::vector<int> pred(static_cast<std::size_t>(n));
        std::vector<int> truth(pred.size());
        for (int i = 0; i < n; ++i) {
            pred[static_cast<std::size_t>(i)] = uniform_int(rng, 0, c - 1);
            truth[static_cast<std::size_t>(i)] = uniform_int(rng, 0, c - 1);
        }
        // Oracle: per-class precision and recall, then harmonic mean.
        double sum = 0.0;
        int counted = 0;
        for (int k = 0; k < c; ++k) {
            int tp = 0, npred = 0, ntrue = 0;
            for (int i = 0; i < n; ++i) {
                const bool p = pred[static_cast<std::size_t>(i)] == k;
                const bool t = truth[static_cast<std::size_t>(i)] == k;
                tp += p && t;
                npred += p;
                ntrue += t;
            }
            if (npred == 0 && ntrue == 0) continue;
            ++counted;
            if (tp == 0) continue;
            const double prec = static_cast<double>(tp) / npred;
            const double rec = static_cast<double>(tp) / ntrue;
            sum += 2.0 * prec * rec / (prec + rec);
        }
        CHECK(metrics_macro_f1(pred, truth, c) == doctest::Approx(sum / counted).epsilon(1e-12));
    }
}

TEST_CASE("random_split produces disjoint, covering, seed-stable masks") {
    const SplitMasks a = random_split(100, 0.6, 0.2, 3);
    const SplitMasks b = random_split(100, 0.6, 0.2, 3);
    CHECK(a.train == b.train);
    CHECK(a.train.size() == 60);
    CHECK(a.val.size() == 20);
    CHECK(a.test.size() == 20);
    std::set<int> all(a.train.begin(), a.train.end());
    all.insert(a.val.begin(), a.val.end());
    all.insert(a.test.begin(), a.test.end());
    CHECK(all.size() == 100);
    CHECK(random_split(100, 0.6, 0.2, 4).train != a.train);
    CHECK_THROWS_AS(random_split(100, 0.9, 0.2, 0), ContractError);
}

TEST_CASE("row_normalize scales rows to unit L1 norm and leaves zero rows alone") {
    Matrix x(2, 3);
    x << 1.0, -3.0, 0.0, 0.0, 0.0, 0.0;
    const Matrix r = row_normalize(x);
    CHECK(r(0, 0) == doctest::Approx(0.25));
    CHECK(r(0, 1) == doctest::Approx(-0.75));
    CHECK(r.row(1).norm() == 0.0);
}

TEST_CASE("node classification on a homophilic SBM is accurate and deterministic") {
    SbmDatasetOptions opts;
    const NodeClassDataset ds = make_sbm_dataset(opts, 1);
    DmdStage stage;
    const ModelSpec spec = small_model(60);
    const NodeClassResult a = run_node_classification(ds, gcn_dynamic(8), stage, spec);
    const NodeClassResult b = run_node_classification(ds, gcn_dynamic(8), stage, spec);
    CHECK(a.test.accuracy >= 0.85);
    CHECK(a.test.accuracy == b.test.accuracy);
    CHECK(a.best_epoch == b.best_epoch);
    REQUIRE(a.history.size() == 60);
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].train_loss == b.history[i].train_loss);
    }
    CHECK(a.model.theta() == b.model.theta());
    CHECK(a.dmd.rank == static_cast<int>(a.model.theta().size()));
}

TEST_CASE("constant labels give perfect accuracy and macro-F1") {
    SbmDatasetOptions opts;
    opts.n = 60;
    NodeClassDataset ds = make_sbm_dataset(opts, 2);
    std::fill(ds.labels.begin(), ds.labels.end(), 0);
    DmdStage stage;
    stage.self_loops = true;  // small sparse SBMs have isolated nodes
    const NodeClassResult r = run_node_classification(ds, gcn_dynamic(4), stage, small_model(5));
    CHECK(r.test.accuracy == 1.0);
    CHECK(r.test.macro_f1 == 1.0);
}

TEST_CASE("weighted cross-entropy trains and non-classification losses are rejected") {
    SbmDatasetOptions opts;
    opts.n = 80;
    const NodeClassDataset ds = make_sbm_dataset(opts, 3);
    DmdStage stage;
    stage.self_loops = true;
    const NodeClassResult r = run_node_classification(ds, gcn_dynamic(4), stage, small_model(20, LossKind::wce));
    CHECK(r.test.macro_f1 > 0.5);
    CHECK_THROWS_AS(run_node_classification(ds, gcn_dynamic(4), stage, small_model(5, LossKind::mse)),
                    ContractError);
}

TEST_CASE("link dataset splits are count-matched and negatives avoid every true edge") {
    const LabeledGraph lg = sbm_generate(120, 3, 0.2, 0.02, 4);
    Rng rng = make_stream(72, "test");
    const LinkPredDataset ds = make_link_dataset(lg.graph, gaussian(rng, 120, 5), 4);
    CHECK_NOTHROW(ds.validate());
    const std::size_t e = ds.pos.train.size() + ds.pos.val.size() + ds.pos.test.size();
    CHECK(e == lg.graph.edges().size());
    CHECK(ds.pos.val.size() == static_cast<std::size_t>(std::llround(0.05 * static_cast<double>(e))));
    CHECK(ds.pos.test.size() == static_cast<std::size_t>(std::llround(0.10 * static_cast<double>(e))));
    CHECK(ds.neg.val.size() == ds.pos.val.size());
    CHECK(ds.neg.test.size() == ds.pos.test.size());
    const Matrix adj = lg.graph.adjacency();
    for (const auto* split : {&ds.neg.val, &ds.neg.test}) {
        for (const auto& [u, v] : *split) {
            CHECK(u != v);
            CHECK(adj(u, v) == 0.0);
        }
    }
    // The training graph drops held-out edges.
    const Matrix train_adj = ds.train_graph().adjacency();
    for (const auto& [u, v] : ds.pos.test) CHECK(train_adj(u, v) == 0.0);
}

TEST_CASE("sampled negatives are distinct non-edges") {
    Rng rng = make_stream(73, "test");
    for (int trial = 0; trial < 10; ++trial) {
        const int n = uniform_int(rng, 10, 40);
        const Graph g = random_connected_graph(rng, n, 0.1);
        std::vector<NodePair> pos;
        for (const Edge& e : g.edges()) pos.emplace_back(e.src, e.dst);
        Rng s = make_stream(static_cast<std::uint64_t>(trial), "negsample");
        const auto neg = sample_negatives(n, pos.size() / 2, pos, s);
        CHECK(neg.size() == pos.size() / 2);
        std::set<NodePair> seen;
        const Matrix adj = g.adjacency();
        for (const auto& [u, v] : neg) {
            CHECK(adj(u, v) == 0.0);
            CHECK(seen.insert({std::min(u, v), std::max(u, v)}).second);
        }
    }
}

TEST_CASE("negative sampling on a complete graph is exhausted") {
    std::vector<Edge> edges;
    for (int i = 0; i < 8; ++i) {
        for (int j = i + 1; j < 8; ++j) edges.push_back({i, j, 1.0});
    }
    const Graph complete(8, edges);
    CHECK_THROWS_AS(make_link_dataset(complete, Matrix::Ones(8, 2), 0), DegenerateInputError);
}

TEST_CASE("link scores are symmetric sigmoids of inner products") {
    Rng rng = make_stream(74, "test");
    const Matrix z = gaussian(rng, 10, 4);
    for (int u = 0; u < 10; ++u) {
        for (int v = 0; v < 10; ++v) {
            CHECK(link_score(z, u, v) == link_score(z, v, u));
        }
    }
    const double dot = z.row(2).dot(z.row(7));
    CHECK(link_score(z, 2, 7) == doctest::Approx(1.0 / (1.0 + std::exp(-dot))));
}

TEST_CASE("random embeddings score at chance on balanced pairs") {
    const LabeledGraph lg = sbm_generate(300, 2, 0.05, 0.05, 5);
    Rng feat = make_stream(75, "test");
    const LinkPredDataset ds = make_link_dataset(lg.graph, gaussian(feat, 300, 3), 5);
    std::vector<NodePair> pos = ds.pos.train;
    Rng s = make_stream(75, "negsample");
    const auto neg = sample_negatives(300, pos.size(), pos, s);
    const Matrix z = gaussian(feat, 300, 8);
    const double n = 2.0 * static_cast<double>(pos.size());
    const double sigma = 0.5 / std::sqrt(n);
    CHECK(std::abs(link_accuracy(z, pos, neg) - 0.5) <= 3.0 * sigma);
}

TEST_CASE("link prediction separates a perfectly clustered graph") {
    const auto [graph, features] = clustered_graph(4, 12);
    const LinkPredDataset ds = make_link_dataset(graph, features, 6);
    ModelSpec spec = small_model(200, LossKind::bce);
    spec.embedding_dim = 8;
    spec.train.dropout = 0.0;
    spec.train.weight_decay = 0.0;
    spec.train.lr = 0.05;
    const LinkPredResult r = run_link_prediction(ds, gcn_dynamic(2), DmdStage{}, spec);
    CHECK(r.test_accuracy >= 0.95);
    const LinkPredResult again = run_link_prediction(ds, gcn_dynamic(2), DmdStage{}, spec);
    CHECK(again.test_accuracy == r.test_accuracy);
    CHECK(again.history.back().train_loss == r.history.back().train_loss);
}

TEST_CASE("stg forecasting recovers a noiseless linear diffusion exactly") {
    StgDataset ds;
    ds.graph = cycle_graph(10);
    // 121 rows with lags 4 and horizon 1 leave an even count of training rows.
    ds.signal = make_diffusion_signal(ds.graph, 121, 400, 0.0, 1);
    ds.lags = 4;
    ds.horizon = 1;
    DmdStage stage;
    stage.truncation = Truncation::full();
    ModelSpec spec = small_model(500, LossKind::mse);
    spec.arch = Arch::conv_first;
    spec.hidden_layers = 0;
    spec.train.lr = 0.05;
    spec.train.weight_decay = 0.0;
    spec.train.dropout = 0.0;
    const StgResult r = run_stg_forecast(ds, stage, spec);
    CHECK(r.test_mse <= 1e-6);
    CHECK(r.test_windows == 23);
    CHECK(r.train_windows == 94);
}

TEST_CASE("stg forecasting of white noise has standardized mse near one") {
    StgDataset ds;
    ds.graph = cycle_graph(10);
    ds.signal = make_white_noise_signal(10, 200, 1);
    ModelSpec spec = small_model(300, LossKind::mse);
    spec.train.weight_decay = 0.0;
    spec.train.dropout = 0.0;
    const StgResult r = run_stg_forecast(ds, DmdStage{}, spec);
    CHECK(std::abs(r.test_mse - 1.0) <= 0.15);
    for (const auto& rec : r.history) CHECK_FALSE(rec.val_metric.has_value());
}

TEST_CASE("stg input contracts") {
    StgDataset ds;
    ds.graph = cycle_graph(5);
    ds.signal = make_white_noise_signal(5, 40, 2);
    ds.horizon = 0;
    CHECK_THROWS_AS(run_stg_forecast(ds, DmdStage{}, small_model(5, LossKind::mse)), ContractError);
    ds.horizon = 1;
    CHECK_THROWS_AS(run_stg_forecast(ds, DmdStage{}, small_model(5, LossKind::ce)), ContractError);
    ds.signal.col(3).setConstant(2.5);
    CHECK_THROWS_AS(run_stg_forecast(ds, DmdStage{}, small_model(5, LossKind::mse)), DegenerateInputError);
}

TEST_CASE("schrodinger demo: unitary truth, exact DMD and isometric PIDMD") {
    SchrodingerSetup s;
    s.steps = 200;
    s.holdout = 40;
    const SchrodingerReport r = schrodinger_demo(s);
    CHECK(r.constraint == "orthogonal");
    CHECK(r.truth_norm_drift <= 1e-10);
    CHECK(r.dmd_onestep_err <= 1e-6);
    CHECK(r.pidmd_norm_drift <= 1e-8);
    CHECK(r.truth.rows() == 200);
    CHECK(r.truth.cols() == 201);
    CHECK(r.reconstruction.cols() == 41);
    // The initial state is the normalized modulated Gaussian.
    CHECK(r.truth.col(0).norm() == doctest::Approx(1.0));

    SchrodingerSetup bad = s;
    bad.dt = 0.0;
    CHECK_THROWS_AS(schrodinger_demo(bad), ContractError);
    bad = s;
    bad.holdout = 200;
    CHECK_THROWS_AS(schrodinger_demo(bad), ContractError);
}
