#include "koopgraph/config.hpp"

#include "koopgraph/error.hpp"
#include "koopgraph/io.hpp"

#include <set>
#include <sstream>

namespace koopgraph {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(TaskKind kind) {
    switch (kind) {
        case TaskKind::nodeclass: return "nodeclass";
        case TaskKind::linkpred: return "linkpred";
        case TaskKind::stg: return "stg";
    }
    return "?";
}

TaskKind task_kind_from_string(const std::string& name) {
    if (name == "nodeclass") return TaskKind::nodeclass;
    if (name == "linkpred") return TaskKind::linkpred;
    if (name == "stg") return TaskKind::stg;
    throw ConfigError("unknown task '" + name + "' (expected nodeclass, linkpred or stg)");
}

fs::path DatasetManifest::resolve(const std::string& rel) const {
    const fs::path p(rel);
    return p.is_absolute() ? p : base_dir / p;
}

void to_json(json& j, const DatasetManifest& m) {
    j = json{{"kind", to_string(m.kind)},
             {"edges", m.edges},
             {"directed", m.directed},
             {"normalize_adjacency", m.normalize_adjacency}};
    if (m.kind == TaskKind::stg) {
        j["signal"] = m.signal;
        j["lags"] = m.lags;
        j["horizon"] = m.horizon;
        return;
    }
    j["features"] = m.features;
    j["normalize_features"] = m.normalize_features;
    if (m.kind == TaskKind::nodeclass) {
        j["labels"] = m.labels;
        if (!m.splits.empty()) j["splits"] = m.splits;
    }
}

void from_json(const json& j, DatasetManifest& m) {
    m.kind = task_kind_from_string(j.at("kind").get<std::string>());
    m.edges = j.at("edges").get<std::string>();
    m.directed = j.value("directed", false);
    m.normalize_adjacency = j.value("normalize_adjacency", true);
    m.normalize_features = j.value("normalize_features", true);
    if (m.kind == TaskKind::stg) {
        m.signal = j.at("signal").get<std::string>();
        m.lags = j.value("lags", 4);
        m.horizon = j.value("horizon", 1);
    } else {
        m.features = j.at("features").get<std::string>();
        if (m.kind == TaskKind::nodeclass) {
            m.labels = j.at("labels").get<std::string>();
            m.splits = j.value("splits", std::string());
        }
    }
}

namespace {

json parse_json_file(const fs::path& path) {
    try {
        return json::parse(io::read_text(path));
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void require_file(const fs::path& path, const std::string& role) {
    if (!fs::is_regular_file(path)) throw ConfigError(role + " file not found: " + path.string());
}

}  // namespace

DatasetManifest load_manifest(const fs::path& path) {
    const json j = parse_json_file(path);
    DatasetManifest m;
    try {
        m = j.get<DatasetManifest>();
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    m.base_dir = path.parent_path();
    require_file(m.resolve(m.edges), "edges");
    if (m.kind == TaskKind::stg) {
        require_file(m.resolve(m.signal), "signal");
    } else {
        require_file(m.resolve(m.features), "features");
    }
    if (m.kind == TaskKind::nodeclass) {
        require_file(m.resolve(m.labels), "labels");
        if (!m.splits.empty()) require_file(m.resolve(m.splits), "splits");
    }
    return m;
}

void save_manifest(const fs::path& path, const DatasetManifest& m) {
    io::write_text(path, json(m).dump(2) + "\n");
}

std::vector<std::string> split_tokens(const SplitMasks& masks, int n) {
    std::vector<std::string> out(static_cast<std::size_t>(n), "none");
    for (const int i : masks.train) out[static_cast<std::size_t>(i)] = "train";
    for (const int i : masks.val) out[static_cast<std::size_t>(i)] = "val";
    for (const int i : masks.test) out[static_cast<std::size_t>(i)] = "test";
    return out;
}

namespace {

Matrix load_features(const DatasetManifest& m) {
    const Matrix x = io::read_csv_matrix(m.resolve(m.features));
    return m.normalize_features ? row_normalize(x) : x;
}

SplitMasks read_splits(const fs::path& path, int n) {
    std::istringstream in(io::read_text(path));
    SplitMasks masks;
    std::string token;
    int i = 0;
    while (in >> token) {
        if (i >= n) throw ConfigError(path.string() + ": more split entries than nodes");
        if (token == "train") {
            masks.train.push_back(i);
        } else if (token == "val") {
            masks.val.push_back(i);
        } else if (token == "test") {
            masks.test.push_back(i);
        } else if (token != "none") {
            throw ConfigError(path.string() + ": unknown split token '" + token + "' for node " +
                              std::to_string(i));
        }
        ++i;
    }
    if (i != n) {
        throw ConfigError(path.string() + ": " + std::to_string(i) + " split entries for " + std::to_string(n) +
                          " nodes");
    }
    return masks;
}

}  // namespace

NodeClassDataset load_nodeclass_dataset(const DatasetManifest& m, std::uint64_t seed) {
    if (m.kind != TaskKind::nodeclass) throw ConfigError("manifest kind is " + to_string(m.kind) + ", not nodeclass");
    NodeClassDataset ds;
    ds.features = load_features(m);
    const int n = static_cast<int>(ds.features.rows());
    ds.graph = read_edge_list(m.resolve(m.edges), n, m.directed);
    ds.labels = io::read_int_column(m.resolve(m.labels));
    if (static_cast<int>(ds.labels.size()) != n) {
        throw ConfigError(m.resolve(m.labels).string() + ": " + std::to_string(ds.labels.size()) +
                          " labels for " + std::to_string(n) + " feature rows");
    }
    for (const int l : ds.labels) {
        if (l < 0) throw ConfigError(m.resolve(m.labels).string() + ": negative label");
    }
    ds.masks = m.splits.empty() ? random_split(n, 0.6, 0.2, seed) : read_splits(m.resolve(m.splits), n);
    ds.validate();
    return ds;
}

LinkPredDataset load_linkpred_dataset(const DatasetManifest& m, std::uint64_t seed) {
    if (m.kind != TaskKind::linkpred) throw ConfigError("manifest kind is " + to_string(m.kind) + ", not linkpred");
    const Matrix x = load_features(m);
    const Graph g = read_edge_list(m.resolve(m.edges), static_cast<int>(x.rows()), false);
    return make_link_dataset(g, x, seed);
}

StgDataset load_stg_dataset(const DatasetManifest& m) {
    if (m.kind != TaskKind::stg) throw ConfigError("manifest kind is " + to_string(m.kind) + ", not stg");
    StgDataset ds;
    ds.signal = io::read_csv_matrix(m.resolve(m.signal));
    ds.graph = read_edge_list(m.resolve(m.edges), static_cast<int>(ds.signal.cols()), m.directed);
    ds.lags = m.lags;
    ds.horizon = m.horizon;
    try {
        ds.validate();
    } catch (const ContractError& e) {
        throw ConfigError(m.resolve(m.signal).string() + ": " + e.what());
    }
    return ds;
}

fs::path RunConfig::manifest_path() const {
    const fs::path p(dataset);
    return p.is_absolute() ? p : base_dir / p;
}

void to_json(json& j, const RunConfig& c) {
    json dmd{{"mode_kind", to_string(c.dmd.mode_kind)}, {"self_loops", c.dmd.self_loops}};
    switch (c.dmd.truncation.kind) {
        case Truncation::Kind::energy: dmd["xi"] = c.dmd.truncation.xi; break;
        case Truncation::Kind::rank: dmd["rank"] = c.dmd.truncation.r; break;
        case Truncation::Kind::full: dmd["xi"] = nullptr; break;
    }
    if (c.dmd.constraint) {
        dmd["constraint"] = json{{"kind", to_string(*c.dmd.constraint)}};
        if (c.dmd.constraint->kind == PidmdConstraint::Kind::ridge) {
            dmd["constraint"]["lambda"] = c.dmd.constraint->lambda;
        }
    } else {
        dmd["constraint"] = nullptr;
    }
    const TrainConfig& t = c.model.train;
    j = json{{"dataset", c.dataset},
             {"dynamic", c.dynamic},
             {"dmd", dmd},
             {"model",
              {{"arch", to_string(c.model.arch)},
               {"hidden_dim", t.hidden_dim},
               {"hidden_layers", c.model.hidden_layers},
               {"embedding_dim", c.model.embedding_dim},
               {"dropout", t.dropout}}},
             {"train",
              {{"lr", t.lr}, {"weight_decay", t.weight_decay}, {"epochs", t.epochs}, {"loss", to_string(t.loss)}}},
             {"seed", c.seed}};
}

void from_json(const json& j, RunConfig& c) {
    static const std::set<std::string> sections{"dataset", "dynamic", "dmd", "model", "train", "seed"};
    for (const auto& [key, value] : j.items()) {
        if (!sections.count(key)) throw ConfigError("config: unknown top-level key '" + key + "'");
    }
    c.dataset = j.at("dataset").get<std::string>();
    c.dynamic = j.value("dynamic", json{{"kind", "gcn"}}).get<DynamicSpec>();

    const json dmd = j.value("dmd", json::object());
    const bool has_xi = dmd.contains("xi");
    const bool has_rank = dmd.contains("rank");
    if (has_xi == has_rank) throw ConfigError("config: dmd needs exactly one of 'xi' (number or null) and 'rank'");
    if (has_rank) {
        c.dmd.truncation = Truncation::rank(dmd.at("rank").get<int>());
    } else if (dmd.at("xi").is_null()) {
        c.dmd.truncation = Truncation::full();
    } else {
        c.dmd.truncation = Truncation::energy(dmd.at("xi").get<double>());
    }
    c.dmd.mode_kind = mode_kind_from_string(dmd.value("mode_kind", std::string("projected")));
    c.dmd.self_loops = dmd.value("self_loops", false);
    c.dmd.constraint.reset();
    if (dmd.contains("constraint") && !dmd.at("constraint").is_null()) {
        const json& k = dmd.at("constraint");
        c.dmd.constraint = constraint_from_string(k.at("kind").get<std::string>(), k.value("lambda", 0.0));
    }

    const json model = j.value("model", json::object());
    c.model.arch = arch_from_string(model.value("arch", std::string("standard")));
    c.model.hidden_layers = model.value("hidden_layers", 1);
    c.model.embedding_dim = model.value("embedding_dim", 32);
    TrainConfig& t = c.model.train;
    t.hidden_dim = model.value("hidden_dim", 64);
    t.dropout = model.value("dropout", 0.5);

    const json train = j.value("train", json::object());
    t.lr = train.value("lr", 0.01);
    t.weight_decay = train.value("weight_decay", 5e-4);
    t.epochs = train.value("epochs", 200);
    t.loss = loss_kind_from_string(train.value("loss", std::string("ce")));

    c.seed = j.value("seed", std::uint64_t{0});
    t.seed = c.seed;
}

RunConfig load_run_config(const fs::path& path) {
    const json j = parse_json_file(path);
    RunConfig c;
    try {
        c = j.get<RunConfig>();
        c.model.train.validate();
        if (c.dmd.truncation.kind == Truncation::Kind::energy &&
            !(c.dmd.truncation.xi > 0.0 && c.dmd.truncation.xi <= 1.0)) {
            throw ConfigError("dmd.xi must lie in (0, 1]");
        }
        if (c.dmd.truncation.kind == Truncation::Kind::rank && c.dmd.truncation.r < 1) {
            throw ConfigError("dmd.rank must be >= 1");
        }
        if (c.model.hidden_layers < 0 || c.model.embedding_dim < 1) {
            throw ConfigError("model.hidden_layers must be >= 0 and model.embedding_dim >= 1");
        }
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    } catch (const ContractError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    c.base_dir = path.parent_path();
    return c;
}

}  // namespace koopgraph
