#include "koopgraph/config.hpp"
#include "koopgraph/error.hpp"
#include "koopgraph/io.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace koopgraph;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kNumerical = 3, kDivergence = 4, kLocked = 5 };

struct LockedError : Error {
    using Error::Error;
};

/// Exclusive advisory lock on out_dir for the lifetime of a command.
class OutDirLock {
public:
    explicit OutDirLock(const fs::path& dir) : path_(dir / ".koopgraph.lock") {
        fs::create_directories(dir);
        fd_ = ::open(path_.c_str(), O_CREAT | O_RDWR, 0644);
        if (fd_ < 0) throw ConfigError("cannot create lock file: " + path_.string());
        if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
            ::close(fd_);
            fd_ = -1;
            throw LockedError("output directory is in use by another process: " + dir.string());
        }
    }
    ~OutDirLock() {
        if (fd_ < 0) return;
        ::unlink(path_.c_str());
        ::close(fd_);
    }
    OutDirLock(const OutDirLock&) = delete;
    OutDirLock& operator=(const OutDirLock&) = delete;

private:
    fs::path path_;
    int fd_ = -1;
};

struct Globals {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    bool quiet = false;
};

class Printer {
public:
    explicit Printer(bool quiet) : quiet_(quiet) {}
    template <typename T>
    Printer& operator<<(const T& v) {
        if (!quiet_) std::cout << v;
        return *this;
    }

private:
    bool quiet_;
};

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v == 0.0 ? 0.0 : v);
    return buf;
}

std::string sci(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6e", v);
    return buf;
}

std::string format_eigenvalue(const std::complex<double>& z) {
    if (z.imag() == 0.0) return fixed6(z.real());
    return fixed6(z.real()) + (z.imag() < 0.0 ? "-" : "+") + fixed6(std::abs(z.imag())) + "i";
}

void require(const std::string& value, const std::string& flag) {
    if (value.empty()) throw ConfigError(flag + " is required for this command");
}

RunConfig load_config(const Globals& g) {
    require(g.config, "--config");
    RunConfig cfg = load_run_config(g.config);
    if (g.seed) {
        cfg.seed = *g.seed;
        cfg.model.train.seed = *g.seed;
    }
    return cfg;
}

void write_json(const fs::path& path, const json& j) { io::write_text(path, j.dump(2) + "\n"); }

json dmd_manifest(const DmdResult& r, int nodes) {
    json eig = json::array();
    for (Eigen::Index k = 0; k < r.eigenvalues.size(); ++k) {
        eig.push_back({r.eigenvalues(k).real(), r.eigenvalues(k).imag()});
    }
    json sv = json::array();
    for (Eigen::Index k = 0; k < r.sing_values.size(); ++k) sv.push_back(r.sing_values(k));
    json j{{"rank", r.rank},
           {"nodes", nodes},
           {"mode_kind", to_string(r.mode_kind)},
           {"energy_captured", r.energy_captured},
           {"requested_xi", r.requested_xi ? json(*r.requested_xi) : json(nullptr)},
           {"eigenvalues", eig},
           {"singular_values", sv},
           {"warnings", r.warnings}};
    return j;
}

Matrix eigenvalue_table(const DmdResult& r) {
    Matrix m(r.eigenvalues.size(), 2);
    for (Eigen::Index k = 0; k < r.eigenvalues.size(); ++k) {
        m(k, 0) = r.eigenvalues(k).real();
        m(k, 1) = r.eigenvalues(k).imag();
    }
    return m;
}

// ---------------------------------------------------------------------------

int cmd_dmd_fit(const Globals& g) {
    require(g.out, "--out");
    const RunConfig cfg = load_config(g);
    const DatasetManifest manifest = load_manifest(cfg.manifest_path());
    DmdStage stage = cfg.dmd;
    stage.normalize_adjacency = manifest.normalize_adjacency;
    const fs::path out(g.out);
    OutDirLock lock(out);

    SnapshotPair pair;
    switch (manifest.kind) {
        case TaskKind::nodeclass: {
            const auto ds = load_nodeclass_dataset(manifest, cfg.seed);
            pair = snapshots_from_trajectory(
                rollout(cfg.dynamic, propagation_operator(ds.graph, stage), ds.features), cfg.dynamic);
            break;
        }
        case TaskKind::linkpred: {
            const auto ds = load_linkpred_dataset(manifest, cfg.seed);
            pair = snapshots_from_trajectory(
                rollout(cfg.dynamic, propagation_operator(ds.train_graph(), stage), ds.features), cfg.dynamic);
            break;
        }
        case TaskKind::stg: {
            const auto ds = load_stg_dataset(manifest);
            const auto t = ds.signal.rows();
            pair.x = ds.signal.topRows(t - 1).transpose();
            pair.y = ds.signal.bottomRows(t - 1).transpose();
            break;
        }
    }
    const DmdResult r = fit_modes(pair, stage);
    write_json(out / "manifest.json", dmd_manifest(r, static_cast<int>(pair.x.rows())));
    io::write_tensor(out / "modes.kgrf", r.modes);
    io::write_tensor(out / "k_reduced.kgrf", r.k_reduced);
    io::write_tensor(out / "eigenvalues.kgrf", eigenvalue_table(r));

    Printer p(g.quiet);
    p << "rank " << r.rank << "\n";
    p << "energy " << fixed6(r.energy_captured) << "\n";
    p << "eigenvalues";
    for (Eigen::Index k = 0; k < std::min<Eigen::Index>(10, r.eigenvalues.size()); ++k) {
        p << " " << format_eigenvalue(r.eigenvalues(k));
    }
    p << "\n";
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
    return kOk;
}

json epoch_json(const EpochRecord& e) {
    return json{{"epoch", e.epoch},
                {"train_loss", e.train_loss},
                {"val_metric", e.val_metric ? json(*e.val_metric) : json(nullptr)},
                {"test_metric", e.test_metric}};
}

void write_metrics(const fs::path& out, const std::vector<EpochRecord>& history, const json& summary) {
    std::ostringstream lines;
    for (const auto& e : history) lines << epoch_json(e).dump() << "\n";
    json tail = summary;
    tail["summary"] = true;
    lines << tail.dump() << "\n";
    io::write_text(out / "metrics.jsonl", lines.str());
    write_json(out / "summary.json", summary);
}

int cmd_train(const Globals& g, const std::string& task_flag) {
    require(g.out, "--out");
    const RunConfig cfg = load_config(g);
    const DatasetManifest manifest = load_manifest(cfg.manifest_path());
    const TaskKind task = task_flag.empty() ? manifest.kind : task_kind_from_string(task_flag);
    if (task != manifest.kind) {
        throw ConfigError("task " + to_string(task) + " does not match dataset kind " + to_string(manifest.kind));
    }
    DmdStage stage = cfg.dmd;
    stage.normalize_adjacency = manifest.normalize_adjacency;
    const fs::path out(g.out);
    OutDirLock lock(out);
    Printer p(g.quiet);

    json summary{{"task", to_string(task)}, {"seed", cfg.seed}};
    switch (task) {
        case TaskKind::nodeclass: {
            const auto ds = load_nodeclass_dataset(manifest, cfg.seed);
            auto r = run_node_classification(ds, cfg.dynamic, stage, cfg.model);
            summary["rank"] = r.dmd.rank;
            summary["best_epoch"] = r.best_epoch;
            summary["train_accuracy"] = r.train.accuracy;
            summary["val_accuracy"] = r.val.accuracy;
            summary["test_accuracy"] = r.test.accuracy;
            summary["train_macro_f1"] = r.train.macro_f1;
            summary["val_macro_f1"] = r.val.macro_f1;
            summary["test_macro_f1"] = r.test.macro_f1;
            write_metrics(out, r.history, summary);
            r.model.save(out / "checkpoint");
            p << "test_accuracy " << fixed6(r.test.accuracy) << "\n";
            break;
        }
        case TaskKind::linkpred: {
            const auto ds = load_linkpred_dataset(manifest, cfg.seed);
            auto r = run_link_prediction(ds, cfg.dynamic, stage, cfg.model);
            summary["rank"] = r.dmd.rank;
            summary["best_epoch"] = r.best_epoch;
            summary["train_accuracy"] = r.train_accuracy;
            summary["val_accuracy"] = r.val_accuracy;
            summary["test_accuracy"] = r.test_accuracy;
            write_metrics(out, r.history, summary);
            r.model.save(out / "checkpoint");
            p << "test_accuracy " << fixed6(r.test_accuracy) << "\n";
            break;
        }
        case TaskKind::stg: {
            const auto ds = load_stg_dataset(manifest);
            auto r = run_stg_forecast(ds, stage, cfg.model);
            summary["rank"] = r.dmd.rank;
            summary["train_mse"] = r.train_mse;
            summary["test_mse"] = r.test_mse;
            summary["train_windows"] = r.train_windows;
            summary["test_windows"] = r.test_windows;
            write_metrics(out, r.history, summary);
            r.model.save(out / "checkpoint");
            p << "test_mse " << sci(r.test_mse) << "\n";
            break;
        }
    }
    return kOk;
}

struct SchrodingerFlags {
    SchrodingerSetup setup;
    std::string constraint = "orthogonal";
    double lambda = 0.0;
};

int cmd_demo_schrodinger(const Globals& g, SchrodingerFlags flags) {
    SchrodingerSetup& s = flags.setup;
    s.constraint = constraint_from_string(flags.constraint, flags.lambda);
    if (g.seed) s.seed = *g.seed;
    s.validate();
    std::optional<OutDirLock> lock;
    if (!g.out.empty()) lock.emplace(fs::path(g.out));
    const SchrodingerReport r = schrodinger_demo(s);

    if (!g.out.empty()) {
        const fs::path out(g.out);
        io::write_tensor(out / "truth.kgrf", r.truth);
        io::write_tensor(out / "reconstruction.kgrf", r.reconstruction);
        write_json(out / "report.json", json{{"constraint", r.constraint},
                                             {"truth_norm_drift", r.truth_norm_drift},
                                             {"dmd_onestep_err", r.dmd_onestep_err},
                                             {"pidmd_rollout_err", r.pidmd_rollout_err},
                                             {"pidmd_norm_drift", r.pidmd_norm_drift}});
    }
    Printer p(g.quiet);
    p << "constraint " << r.constraint << "\n";
    p << "truth_norm_drift " << sci(r.truth_norm_drift) << "\n";
    p << "dmd_onestep_err " << sci(r.dmd_onestep_err) << "\n";
    p << "pidmd_rollout_err " << sci(r.pidmd_rollout_err) << "\n";
    p << "pidmd_norm_drift " << sci(r.pidmd_norm_drift) << "\n";
    return kOk;
}

struct SynthFlags {
    std::string kind = "nodeclass";
    SbmDatasetOptions sbm;
    std::string graph = "sbm";
    int steps = 200;
    int burn_in = 0;
    double signal_noise = 0.0;
    int lags = 4;
    int horizon = 1;
};

int cmd_gen_synth(const Globals& g, SynthFlags f) {
    require(g.out, "--out");
    const std::uint64_t seed = g.seed.value_or(0);
    const TaskKind kind = task_kind_from_string(f.kind);
    if (kind == TaskKind::linkpred) throw ConfigError("gen-synth writes nodeclass or stg datasets");
    const fs::path out(g.out);
    OutDirLock lock(out);
    Printer p(g.quiet);

    DatasetManifest m;
    m.kind = kind;
    m.edges = "edges.tsv";
    if (kind == TaskKind::nodeclass) {
        f.sbm.normalize_features = false;  // raw features on disk; the manifest asks for normalization
        const NodeClassDataset ds = make_sbm_dataset(f.sbm, seed);
        write_edge_list(out / "edges.tsv", ds.graph);
        io::write_csv_matrix(out / "features.csv", ds.features);
        io::write_int_column(out / "labels.txt", ds.labels);
        std::ostringstream splits;
        for (const auto& t : split_tokens(ds.masks, ds.graph.num_nodes())) splits << t << "\n";
        io::write_text(out / "splits.txt", splits.str());
        m.features = "features.csv";
        m.labels = "labels.txt";
        m.splits = "splits.txt";
        p << "nodes " << ds.graph.num_nodes() << " edges " << ds.graph.edges().size() << "\n";
    } else {
        Graph graph;
        if (f.graph == "cycle") {
            graph = cycle_graph(f.sbm.n);
        } else if (f.graph == "sbm") {
            graph = sbm_generate(f.sbm.n, f.sbm.blocks, f.sbm.p_in, f.sbm.p_out, seed).graph;
        } else {
            throw ConfigError("--graph must be cycle or sbm");
        }
        const Matrix signal = make_diffusion_signal(graph, f.steps, f.burn_in, f.signal_noise, seed);
        write_edge_list(out / "edges.tsv", graph);
        io::write_csv_matrix(out / "signal.csv", signal);
        m.signal = "signal.csv";
        m.lags = f.lags;
        m.horizon = f.horizon;
        p << "nodes " << graph.num_nodes() << " edges " << graph.edges().size() << " steps " << f.steps << "\n";
    }
    save_manifest(out / "manifest.json", m);
    return kOk;
}

struct GradCheckFlags {
    std::string model = "dmdgnn";
    std::string arch = "standard";
    int nodes = 20;
    int features = 5;
    int hidden = 8;
    int classes = 3;
    int rank = 6;
    double tolerance = 1e-4;
    bool train_mode = false;
};

int cmd_grad_check(const Globals& g, const GradCheckFlags& f) {
    if (f.nodes < 2 || f.nodes > 30) throw ConfigError("--nodes must lie in [2, 30]");
    if (f.features < 1 || f.hidden < 1 || f.classes < 2) {
        throw ConfigError("--features and --hidden must be >= 1, --classes >= 2");
    }
    if (f.rank < 1 || f.rank > f.nodes) throw ConfigError("--rank must lie in [1, nodes]");
    const std::uint64_t seed = g.seed.value_or(0);
    Rng data = make_stream(seed, "features");
    Matrix x(f.nodes, f.features);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = standard_normal(data);
    std::vector<int> labels(static_cast<std::size_t>(f.nodes));
    for (auto& l : labels) l = static_cast<int>(data() % static_cast<std::uint64_t>(f.classes));
    const double dropout = f.train_mode ? 0.5 : 0.0;

    Rng init = make_stream(seed, "init");
    std::unique_ptr<TrainableModel> model;
    if (f.model == "dmdgnn") {
        Matrix raw(f.nodes, f.rank);
        for (Eigen::Index i = 0; i < raw.size(); ++i) raw.data()[i] = standard_normal(data);
        model = std::make_unique<DmdGnnModel>(arch_from_string(f.arch), orthonormal_basis(raw),
                                              std::vector<int>{f.features, f.hidden, f.classes}, dropout, init);
    } else if (f.model == "gcn" || f.model == "mlp") {
        Matrix prop;
        if (f.model == "gcn") {
            const auto lg = sbm_generate(f.nodes, 2, 0.5, 0.1, seed);
            prop = normalized_adjacency(lg.graph, true);
        }
        model = std::make_unique<DenseChainModel>(std::vector<int>{f.features, f.hidden, f.classes}, dropout, init,
                                                  prop);
    } else {
        throw ConfigError("--model must be dmdgnn, gcn or mlp");
    }

    // Zero biases put fully dropped rows exactly on the ReLU kink.
    for (const auto& param : model->parameters()) {
        if (param.name.ends_with(".bias")) {
            for (Eigen::Index i = 0; i < param.value->size(); ++i) param.value->data()[i] = 0.1 * standard_normal(data);
        }
    }

    LossTargets targets;
    targets.labels = labels;
    GradCheckOptions opts;
    opts.tolerance = f.tolerance;
    opts.train_mode = f.train_mode;
    opts.dropout_seed = seed;
    const auto report = grad_check(
        *model, x, [&](const Matrix& out) { return loss_and_grad(LossKind::ce, out, targets); }, opts);

    Printer p(g.quiet);
    for (const auto& e : report.entries) p << e.name << " " << sci(e.max_rel_error) << "\n";
    p << "max_rel_error " << sci(report.max_rel_error) << " tolerance " << sci(report.tolerance) << " "
      << (report.passed ? "PASS" : "FAIL") << "\n";
    return report.passed ? kOk : kNumerical;
}

template <typename F>
int guarded(F&& body) {
    try {
        return body();
    } catch (const LockedError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kLocked;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kDivergence;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfig;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfig;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNumerical;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfig;
    }
}

int apply_thread_cap() {
    const char* env = std::getenv("KOOPGRAPH_THREADS");
    if (!env || !*env) return kOk;
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (*end != '\0' || n < 1) {
        std::cerr << "error: KOOPGRAPH_THREADS must be a positive integer\n";
        return kConfig;
    }
    Eigen::setNbThreads(static_cast<int>(n));
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"koopgraph: graph neural networks built on dynamic mode decomposition"};
    app.require_subcommand(1);
    app.footer(
        "Exit codes: 0 success, 2 configuration or input error, 3 numerical failure or failed gradient "
        "check, 4 divergent dynamics, 5 output directory locked.\n"
        "Environment: KOOPGRAPH_THREADS caps kernel parallelism.");

    Globals g;
    app.add_option("--config", g.config, "Run configuration (JSON)");
    app.add_option("--out", g.out, "Output directory");
    app.add_option("--seed", g.seed, "Run seed; overrides the config seed");
    app.add_flag("--quiet", g.quiet, "Suppress standard output");
    app.fallthrough();

    auto* dmd = app.add_subcommand("dmd-fit", "Fit DMD modes for the configured dataset and dynamic");

    std::string task;
    auto* train = app.add_subcommand("train", "Train a DMD-GNN and write metrics, checkpoint and summary");
    train->add_option("--task", task, "nodeclass, linkpred or stg (default: the dataset kind)");

    SchrodingerFlags sf;
    auto* demo = app.add_subcommand("demo-schrodinger", "Free-particle Schroedinger demo on a chain graph");
    demo->add_option("--n", sf.setup.n_nodes, "Lattice nodes")->capture_default_str();
    demo->add_option("--x0", sf.setup.x0, "Initial packet centre")->capture_default_str();
    demo->add_option("--dx", sf.setup.dx, "Lattice spacing")->capture_default_str();
    demo->add_option("--width", sf.setup.width, "Packet width")->capture_default_str();
    demo->add_option("--k", sf.setup.wavenumber, "Wavenumber per lattice spacing")->capture_default_str();
    demo->add_option("--dt", sf.setup.dt, "Time step")->capture_default_str();
    demo->add_option("--steps", sf.setup.steps, "Trajectory steps")->capture_default_str();
    demo->add_option("--holdout", sf.setup.holdout, "Trailing steps kept out of the fits")->capture_default_str();
    demo->add_option("--constraint", sf.constraint, "orthogonal, symmetric, ridge or none")->capture_default_str();
    demo->add_option("--lambda", sf.lambda, "Ridge strength")->capture_default_str();

    SynthFlags syn;
    auto* gen = app.add_subcommand("gen-synth", "Write a synthetic SBM node-classification or diffusion STG dataset");
    gen->add_option("--kind", syn.kind, "nodeclass or stg")->capture_default_str();
    gen->add_option("--n", syn.sbm.n, "Nodes")->capture_default_str();
    gen->add_option("--blocks", syn.sbm.blocks, "SBM blocks (classes)")->capture_default_str();
    gen->add_option("--p-in", syn.sbm.p_in, "Intra-block edge probability")->capture_default_str();
    gen->add_option("--p-out", syn.sbm.p_out, "Inter-block edge probability")->capture_default_str();
    gen->add_option("--feature-dim", syn.sbm.feature_dim, "Feature width")->capture_default_str();
    gen->add_option("--separation", syn.sbm.class_separation, "Norm of the class means")->capture_default_str();
    gen->add_option("--noise", syn.sbm.noise, "Feature noise std")->capture_default_str();
    gen->add_option("--train-frac", syn.sbm.train_frac, "Training fraction")->capture_default_str();
    gen->add_option("--val-frac", syn.sbm.val_frac, "Validation fraction")->capture_default_str();
    gen->add_option("--graph", syn.graph, "stg graph: sbm or cycle")->capture_default_str();
    gen->add_option("--steps", syn.steps, "stg signal length")->capture_default_str();
    gen->add_option("--burn-in", syn.burn_in, "stg discarded diffusion steps")->capture_default_str();
    gen->add_option("--signal-noise", syn.signal_noise, "stg observation noise std")->capture_default_str();
    gen->add_option("--lags", syn.lags, "stg input lags")->capture_default_str();
    gen->add_option("--horizon", syn.horizon, "stg forecast horizon")->capture_default_str();

    GradCheckFlags gf;
    auto* gc = app.add_subcommand("grad-check", "Finite-difference check of a small random model");
    gc->add_option("--model", gf.model, "dmdgnn, gcn or mlp")->capture_default_str();
    gc->add_option("--arch", gf.arch, "standard or conv_first (dmdgnn)")->capture_default_str();
    gc->add_option("--nodes", gf.nodes, "Nodes (at most 30)")->capture_default_str();
    gc->add_option("--features", gf.features, "Input width")->capture_default_str();
    gc->add_option("--hidden", gf.hidden, "Hidden width")->capture_default_str();
    gc->add_option("--classes", gf.classes, "Output classes")->capture_default_str();
    gc->add_option("--rank", gf.rank, "DMD modes (dmdgnn)")->capture_default_str();
    gc->add_option("--tolerance", gf.tolerance, "Maximum relative error")->capture_default_str();
    gc->add_flag("--train-mode", gf.train_mode, "Check with dropout 0.5 and a fixed mask");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }
    if (const int rc = apply_thread_cap(); rc != kOk) return rc;

    return guarded([&] {
        if (dmd->parsed()) return cmd_dmd_fit(g);
        if (train->parsed()) return cmd_train(g, task);
        if (demo->parsed()) return cmd_demo_schrodinger(g, sf);
        if (gen->parsed()) return cmd_gen_synth(g, syn);
        return cmd_grad_check(g, gf);
    });
}
