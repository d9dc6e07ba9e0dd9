#include "test_support.hpp"

#include "koopgraph/config.hpp"
#include "koopgraph/error.hpp"

#include <doctest.h>

#include <sys/file.h>
#include <sys/wait.h>
#include <fcntl.h>
#include <unistd.h>

#include <array>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

using namespace koopgraph;
using namespace koopgraph::testing;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int code = -1;
    std::string output;
};

RunResult run_cli(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " " + KOOPGRAPH_CLI + std::string(" ") + args + " 2>&1";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    RunResult r;
    std::array<char, 4096> buf{};
    while (const auto n = std::fread(buf.data(), 1, buf.size(), pipe)) r.output.append(buf.data(), n);
    const int status = ::pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

int count_lines(const fs::path& p) {
    std::ifstream in(p);
    int n = 0;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line[0] != '#') ++n;
    }
    return n;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// Small SBM dataset plus a config pointing at it.
struct Fixture {
    fs::path root;
    fs::path data;
    fs::path config;

    explicit Fixture(const std::string& name, nlohmann::json overrides = nlohmann::json::object())
        : root(scratch_dir(name)), data(root / "data"), config(root / "run.json") {
        const auto gen = run_cli("gen-synth --out " + q(data) + " --n 80 --seed 3 --quiet");
        REQUIRE(gen.code == 0);
        nlohmann::json cfg = {
            {"dataset", (data / "manifest.json").string()},
            {"dynamic", {{"kind", "gcn"}, {"steps", 4}}},
            {"dmd", {{"xi", 0.85}, {"mode_kind", "projected"}, {"constraint", nullptr}, {"self_loops", true}}},
            {"model", {{"arch", "standard"}, {"hidden_dim", 16}, {"hidden_layers", 1}, {"dropout", 0.5}}},
            {"train", {{"lr", 0.01}, {"weight_decay", 5e-4}, {"epochs", 5}, {"loss", "ce"}}},
            {"seed", 0}};
        cfg.merge_patch(overrides);
        std::ofstream(config) << cfg.dump(2);
    }

    std::string args(const std::string& sub, const fs::path& out) const {
        return "--config " + q(config) + " --out " + q(out) + " " + sub;
    }
};

}  // namespace

TEST_CASE("gen-synth is deterministic per seed") {
    const auto root = scratch_dir("cli_gen");
    REQUIRE(run_cli("gen-synth --blocks 2 --n 200 --seed 7 --quiet --out " + q(root / "a")).code == 0);
    REQUIRE(run_cli("gen-synth --blocks 2 --n 200 --seed 7 --quiet --out " + q(root / "b")).code == 0);
    for (const auto* f : {"edges.tsv", "features.csv", "labels.txt", "splits.txt", "manifest.json"}) {
        CAPTURE(f);
        CHECK(slurp(root / "a" / f) == slurp(root / "b" / f));
    }
    REQUIRE(run_cli("gen-synth --blocks 2 --n 200 --seed 8 --quiet --out " + q(root / "c")).code == 0);
    CHECK(slurp(root / "a" / "edges.tsv") != slurp(root / "c" / "edges.tsv"));
}

TEST_CASE("gen-synth with p_in 1 and p_out 0 writes every intra-block pair once") {
    const auto root = scratch_dir("cli_gen_full");
    REQUIRE(run_cli("gen-synth --n 200 --blocks 2 --p-in 1 --p-out 0 --quiet --out " + q(root)).code == 0);
    CHECK(count_lines(root / "edges.tsv") == 2 * (100 * 99 / 2));
}

TEST_CASE("gen-synth rejects invalid block and probability flags") {
    const auto root = scratch_dir("cli_gen_bad");
    CHECK(run_cli("gen-synth --blocks 0 --out " + q(root)).code == 2);
    CHECK(run_cli("gen-synth --p-in 1.5 --out " + q(root)).code == 2);
    CHECK(run_cli("gen-synth --kind graphs --out " + q(root)).code == 2);
}

TEST_CASE("gen-synth stg datasets train end to end") {
    const auto root = scratch_dir("cli_stg");
    REQUIRE(run_cli("gen-synth --kind stg --graph cycle --n 10 --steps 80 --quiet --out " + q(root / "data")).code == 0);
    nlohmann::json cfg = {{"dataset", (root / "data" / "manifest.json").string()},
                          {"dynamic", {{"kind", "gcn"}, {"steps", 1}}},
                          {"dmd", {{"xi", nullptr}}},
                          {"model", {{"arch", "conv_first"}, {"hidden_layers", 0}, {"dropout", 0.0}}},
                          {"train", {{"lr", 0.05}, {"weight_decay", 0.0}, {"epochs", 3}, {"loss", "mse"}}},
                          {"seed", 1}};
    std::ofstream(root / "run.json") << cfg.dump();
    const auto r = run_cli("--config " + q(root / "run.json") + " --out " + q(root / "out") + " train");
    CHECK(r.code == 0);
    CHECK(r.output.find("test_mse") != std::string::npos);
    CHECK(count_lines(root / "out" / "metrics.jsonl") == 4);
}

TEST_CASE("train with one epoch writes one epoch record and one summary") {
    const Fixture fx("cli_train", {{"train", {{"epochs", 1}}}});
    const auto out = fx.root / "out";
    const auto r = run_cli(fx.args("train", out));
    REQUIRE(r.code == 0);
    CHECK(r.output.find("test_accuracy") != std::string::npos);
    std::ifstream in(out / "metrics.jsonl");
    std::vector<nlohmann::json> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(nlohmann::json::parse(line));
    REQUIRE(lines.size() == 2);
    CHECK(lines[0].at("epoch") == 1);
    CHECK(lines[0].contains("train_loss"));
    CHECK(lines[0].contains("val_metric"));
    CHECK(lines[1].at("summary") == true);
    CHECK(lines[1].contains("test_accuracy"));
    CHECK(fs::exists(out / "summary.json"));
    CHECK(fs::exists(out / "checkpoint" / "model.json"));
    CHECK_FALSE(fs::exists(out / ".koopgraph.lock"));
}

TEST_CASE("the shipped quickstart config trains within a minute") {
    const auto out = scratch_dir("cli_quickstart");
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = run_cli("--config '" KOOPGRAPH_SOURCE_DIR "/configs/quickstart.json' --out " + q(out) + " train");
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    REQUIRE(r.code == 0);
    CHECK(secs <= 60.0);
    const auto summary = nlohmann::json::parse(slurp(out / "summary.json"));
    CHECK(summary.at("test_accuracy").get<double>() >= 0.9);
}

TEST_CASE("train rejects unknown and mismatched tasks with exit 2") {
    const Fixture fx("cli_task");
    CHECK(run_cli(fx.args("train --task regression", fx.root / "out")).code == 2);
    CHECK(run_cli(fx.args("train --task stg", fx.root / "out")).code == 2);
}

TEST_CASE("a missing features file exits 2 and names the path") {
    const Fixture fx("cli_missing");
    fs::remove(fx.data / "features.csv");
    for (const auto* sub : {"dmd-fit", "train"}) {
        const auto r = run_cli(fx.args(sub, fx.root / "out"));
        CHECK(r.code == 2);
        CHECK(r.output.find((fx.data / "features.csv").string()) != std::string::npos);
    }
}

TEST_CASE("config errors exit 2") {
    const Fixture both("cli_xi_rank", {{"dmd", {{"rank", 4}}}});
    const auto r = run_cli(both.args("dmd-fit", both.root / "out"));
    CHECK(r.code == 2);
    CHECK(r.output.find("xi") != std::string::npos);
    const Fixture extra("cli_extra", {{"optimizer", "sgd"}});
    CHECK(run_cli(extra.args("train", extra.root / "out")).code == 2);
    const Fixture bad_xi("cli_bad_xi", {{"dmd", {{"xi", 1.5}}}});
    CHECK(run_cli(bad_xi.args("train", bad_xi.root / "out")).code == 2);
    CHECK(run_cli("train --out " + q(both.root / "out")).code == 2);
    CHECK(run_cli("no-such-command").code == 2);
}

TEST_CASE("identity dynamics print every eigenvalue as 1.000000") {
    const Fixture fx("cli_identity", {{"dynamic", {{"kind", "heat"}, {"tau", 0.0}, {"steps", 3}}}});
    const auto r = run_cli(fx.args("dmd-fit", fx.root / "out"));
    REQUIRE(r.code == 0);
    const auto pos = r.output.find("eigenvalues");
    REQUIRE(pos != std::string::npos);
    std::istringstream line(r.output.substr(pos, r.output.find('\n', pos) - pos));
    std::string word;
    line >> word;
    int count = 0;
    while (line >> word) {
        CHECK(word == "1.000000");
        ++count;
    }
    CHECK(count >= 1);
}

TEST_CASE("dmd-fit bundles are byte-identical across runs") {
    const Fixture fx("cli_bundle");
    REQUIRE(run_cli(fx.args("dmd-fit --quiet", fx.root / "a")).code == 0);
    REQUIRE(run_cli(fx.args("dmd-fit --quiet", fx.root / "b")).code == 0);
    for (const auto* f : {"manifest.json", "modes.kgrf", "k_reduced.kgrf", "eigenvalues.kgrf"}) {
        CAPTURE(f);
        CHECK(slurp(fx.root / "a" / f) == slurp(fx.root / "b" / f));
    }
    const auto manifest = nlohmann::json::parse(slurp(fx.root / "a" / "manifest.json"));
    CHECK(manifest.at("rank").get<int>() >= 1);
    CHECK(manifest.at("nodes") == 80);
}

TEST_CASE("divergent dynamics exit 4") {
    const Fixture fx("cli_diverge", {{"dynamic", {{"kind", "acmp"}, {"b", 50.0}, {"steps", 30}}}});
    const auto r = run_cli(fx.args("train", fx.root / "out"));
    CHECK(r.code == 4);
    CHECK(r.output.find("step") != std::string::npos);
}

TEST_CASE("a held lock on the output directory exits 5") {
    const Fixture fx("cli_lock");
    const auto out = fx.root / "out";
    fs::create_directories(out);
    const int fd = ::open((out / ".koopgraph.lock").c_str(), O_CREAT | O_RDWR, 0644);
    REQUIRE(fd >= 0);
    REQUIRE(::flock(fd, LOCK_EX | LOCK_NB) == 0);
    CHECK(run_cli(fx.args("train", out)).code == 5);
    ::close(fd);
    CHECK(run_cli(fx.args("train --quiet", out)).code == 0);
}

TEST_CASE("demo-schrodinger prints the report and validates flags") {
    const auto r = run_cli("demo-schrodinger --steps 200 --holdout 50");
    REQUIRE(r.code == 0);
    CHECK(r.output.find("constraint orthogonal") != std::string::npos);
    const auto pos = r.output.find("truth_norm_drift ");
    REQUIRE(pos != std::string::npos);
    CHECK(std::stod(r.output.substr(pos + 17)) <= 1e-10);
    const auto sym = run_cli("demo-schrodinger --n 20 --steps 60 --holdout 10 --constraint symmetric");
    CHECK(sym.code == 0);
    CHECK(sym.output.find("constraint symmetric") != std::string::npos);
    CHECK(run_cli("demo-schrodinger --steps 0").code == 2);
    CHECK(run_cli("demo-schrodinger --constraint skew").code == 2);

    const auto out = scratch_dir("cli_demo");
    REQUIRE(run_cli("demo-schrodinger --n 20 --steps 60 --holdout 10 --quiet --out " + q(out)).code == 0);
    CHECK(fs::exists(out / "truth.kgrf"));
    CHECK(fs::exists(out / "reconstruction.kgrf"));
    CHECK(nlohmann::json::parse(slurp(out / "report.json")).at("constraint") == "orthogonal");
}

TEST_CASE("grad-check passes by default and fails with an impossible tolerance") {
    CHECK(run_cli("grad-check").code == 0);
    CHECK(run_cli("grad-check --arch conv_first --train-mode").code == 0);
    CHECK(run_cli("grad-check --model gcn").code == 0);
    CHECK(run_cli("grad-check --tolerance 1e-30").code == 3);
    CHECK(run_cli("grad-check --nodes 31").code == 2);
}

TEST_CASE("help documents the exit codes and the thread variable") {
    const auto r = run_cli("--help");
    CHECK(r.code == 0);
    CHECK(r.output.find("KOOPGRAPH_THREADS") != std::string::npos);
    CHECK(r.output.find("grad-check") != std::string::npos);
    CHECK(run_cli("grad-check", "KOOPGRAPH_THREADS=zero").code == 2);
    CHECK(run_cli("grad-check", "KOOPGRAPH_THREADS=2").code == 0);
}

TEST_CASE("run configs round-trip through JSON") {
    const Fixture fx("cli_roundtrip", {{"dmd", {{"constraint", {{"kind", "ridge"}, {"lambda", 0.25}}}}}});
    const RunConfig a = load_run_config(fx.config);
    const nlohmann::json j = a;
    const RunConfig b = j.get<RunConfig>();
    CHECK(nlohmann::json(b) == j);
    CHECK(a.dmd.constraint.has_value());
    CHECK(a.manifest_path() == fx.data / "manifest.json");
    const DatasetManifest m = load_manifest(a.manifest_path());
    CHECK(m.kind == TaskKind::nodeclass);
    CHECK(load_nodeclass_dataset(m, 0).features.rows() == 80);
}
