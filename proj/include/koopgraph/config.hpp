#pragma once

#include "koopgraph/tasks.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace koopgraph {

enum class TaskKind { nodeclass, linkpred, stg };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& name);

/// Dataset description stored as JSON next to its data files. Relative paths
/// are resolved against the manifest's directory at load time.
struct DatasetManifest {
    TaskKind kind = TaskKind::nodeclass;
    std::string edges;     // "src dst [weight]" per line
    std::string features;  // CSV, one node per row (nodeclass, linkpred)
    std::string labels;    // one integer per line (nodeclass)
    std::string splits;    // optional, one of train/val/test/none per line (nodeclass)
    std::string signal;    // CSV, T rows x N columns (stg)
    bool directed = false;
    bool normalize_features = true;
    bool normalize_adjacency = true;
    int lags = 4;
    int horizon = 1;

    std::filesystem::path base_dir;  // not serialized

    std::filesystem::path resolve(const std::string& rel) const;
};

void to_json(nlohmann::json& j, const DatasetManifest& m);
void from_json(const nlohmann::json& j, DatasetManifest& m);

/// Parses the manifest and checks that every referenced file exists.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& m);

/// Loaders throw ConfigError naming the offending file.
NodeClassDataset load_nodeclass_dataset(const DatasetManifest& m, std::uint64_t seed);
LinkPredDataset load_linkpred_dataset(const DatasetManifest& m, std::uint64_t seed);
StgDataset load_stg_dataset(const DatasetManifest& m);

/// Split file tokens: train, val, test, none.
std::vector<std::string> split_tokens(const SplitMasks& masks, int n);

struct RunConfig {
    std::string dataset;  // manifest path as written in the file
    DynamicSpec dynamic;
    DmdStage dmd;
    ModelSpec model;
    std::uint64_t seed = 0;

    std::filesystem::path base_dir;  // not serialized

    std::filesystem::path manifest_path() const;
};

/// The dmd section must carry exactly one of "xi" (a number, or null for no
/// truncation) and "rank".
void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace koopgraph
