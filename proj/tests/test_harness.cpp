#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedpsi/errors.hpp"
#include "fedpsi/harness.hpp"
#include "oracles.hpp"

using namespace fedpsi;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::size_t count_lines(const std::string& text) {
    std::size_t lines = 0;
    for (const char ch : text) {
        if (ch == '\n') ++lines;
    }
    return lines;
}

// Small, fast experiment: 3-class separable blobs, 6 clients.
ExperimentConfig small_config(const fs::path& out_dir) {
    ExperimentConfig c;
    c.synthetic = true;
    c.synthetic_spec.num_classes = 3;
    c.synthetic_spec.examples_per_class = 120;
    c.synthetic_spec.dims = 2;
    c.synthetic_spec.class_separation = 6.0;
    c.synthetic_spec.noise_sigma = 0.5;
    c.synthetic_spec.seed = 5;
    c.protocol = Protocol::Dirichlet;
    c.grid = {0.5, 50.0};
    c.k_list = {6};
    c.methods = {"fedavg", "fedprox", "clust_psi_pfl"};
    c.train.rounds = 2;
    c.train.local_epochs = 1;
    c.train.batch_size = 16;
    c.train.learning_rate = 0.05;
    c.num_seeds = 2;
    c.master_seed = 11;
    c.output_dir = out_dir.string();
    return c;
}

int run_cli(const std::string& args) {
    const std::string command = std::string(FEDPSI_CLI_PATH) + " " + args + " 2>/dev/null";
    const int status = std::system(command.c_str());
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

} // namespace

TEST_SUITE("harness") {

TEST_CASE("config parsing rejects malformed documents") {
    CHECK_THROWS_AS(ExperimentConfig::from_json_text("{not json"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json_text("{}"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json_text(R"({
        "dataset": {"type": "synthetic", "num_classes": 3, "examples_per_class": 10},
        "protocol": "dirichlet", "grid": [], "k_list": [4]})"),
                    ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json_text(R"({
        "dataset": {"type": "synthetic", "num_classes": 3, "examples_per_class": 10},
        "protocol": "similarity", "grid": [1.5], "k_list": [4]})"),
                    ConfigError);
    const ExperimentConfig ok = ExperimentConfig::from_json_text(R"({
        "dataset": {"type": "synthetic", "num_classes": 3, "examples_per_class": 10},
        "protocol": "dirichlet", "grid": [0.5], "k_list": [4],
        "methods": ["fedavg"], "num_seeds": 2, "seed": 9})");
    CHECK(ok.num_seeds == 2);
    CHECK(ok.master_seed == 9);
    CHECK(ok.train.rounds == 40); // standard protocol default
    CHECK(ok.train.client_fraction == 0.5);
    CHECK(ok.train.local_epochs == 5);
    CHECK(ok.train.batch_size == 32);
}

TEST_CASE("cmd_partition writes one file per feasible cell plus a manifest") {
    const fs::path dir = fresh_dir("fedpsi_cmd_partition");
    ExperimentConfig config = small_config(dir);
    CHECK(cmd_partition(config) == 0);

    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(dir / "partitions")) {
        (void)entry;
        ++files;
    }
    CHECK(files == 4); // 2 grid values x 1 k x 2 seeds

    const json manifest = json::parse(read_file(dir / "partition_manifest.json"));
    CHECK(manifest["cells"].size() == 4);
    for (const auto& row : manifest["cells"]) {
        CHECK(row["status"] == "ok");
    }
    CHECK(manifest["config"]["train"]["rounds"] == 2);

    // rerun is byte-identical
    const std::string before = read_file(dir / "partition_manifest.json");
    const std::string file_before =
        read_file(dir / "partitions" / "dirichlet-0.5-k6-r0.json");
    CHECK(cmd_partition(config) == 0);
    CHECK(read_file(dir / "partition_manifest.json") == before);
    CHECK(read_file(dir / "partitions" / "dirichlet-0.5-k6-r0.json") == file_before);
}

TEST_CASE("cmd_partition records infeasible cells and still exits 0") {
    const fs::path dir = fresh_dir("fedpsi_cmd_partition_infeasible");
    ExperimentConfig config = small_config(dir);
    config.synthetic_spec.num_classes = 2;
    config.synthetic_spec.examples_per_class = 10; // 20 examples over 10 clients
    config.grid = {0.05};
    config.k_list = {10};
    CHECK(cmd_partition(config) == 0);
    const json manifest = json::parse(read_file(dir / "partition_manifest.json"));
    for (const auto& row : manifest["cells"]) {
        CHECK(row["status"] == "infeasible");
    }
    CHECK(!fs::exists(dir / "partitions" / "dirichlet-0.05-k10-r0.json"));
}

TEST_CASE("cmd_sweep emits the metric grid and is idempotent") {
    const fs::path dir = fresh_dir("fedpsi_cmd_sweep");
    ExperimentConfig config = small_config(dir);
    config.synthetic_spec.num_classes = 4;
    config.synthetic_spec.examples_per_class = 250;
    config.grid = {0.05, 0.2, 0.7, 5.0, 50.0};
    config.k_list = {8};
    config.num_seeds = 5;
    CHECK(cmd_sweep(config) == 0);

    const std::string csv = read_file(dir / "metrics.csv");
    CHECK(count_lines(csv) == 1 + 25);
    CHECK(csv.rfind("protocol,parameter,seed,k,wpsi,hd,jsd,emd\n", 0) == 0);

    // median wpsi per alpha decreases: spearman against alpha at -1
    std::istringstream rows(csv);
    std::string line;
    std::getline(rows, line);
    std::map<double, std::vector<double>> by_alpha;
    while (std::getline(rows, line)) {
        std::vector<std::string> f;
        std::string field;
        for (const char ch : line) {
            if (ch == ',') {
                f.push_back(field);
                field.clear();
            } else {
                field.push_back(ch);
            }
        }
        f.push_back(field);
        by_alpha[std::stod(f[1])].push_back(std::stod(f[4]));
    }
    std::vector<double> alphas, medians;
    for (auto& [alpha, values] : by_alpha) {
        std::sort(values.begin(), values.end());
        alphas.push_back(alpha);
        medians.push_back(values[values.size() / 2]);
    }
    CHECK(oracles::spearman_rho(alphas, medians) <= -0.9);

    const std::string before = csv;
    CHECK(cmd_sweep(config) == 0);
    CHECK(read_file(dir / "metrics.csv") == before);
}

TEST_CASE("cmd_sweep near-iid similarity rows have tiny wpsi") {
    const fs::path dir = fresh_dir("fedpsi_cmd_sweep_s1");
    ExperimentConfig config = small_config(dir);
    config.protocol = Protocol::Similarity;
    config.grid = {1.0};
    config.k_list = {5};
    config.num_seeds = 3;
    config.synthetic_spec.examples_per_class = 400;
    CHECK(cmd_sweep(config) == 0);
    std::istringstream rows(read_file(dir / "metrics.csv"));
    std::string line;
    std::getline(rows, line);
    while (std::getline(rows, line)) {
        const auto pos = line.find(",1,"); // wpsi column follows protocol,parameter,seed,k
        (void)pos;
        std::vector<std::string> f;
        std::string field;
        for (const char ch : line) {
            if (ch == ',') {
                f.push_back(field);
                field.clear();
            } else {
                field.push_back(ch);
            }
        }
        f.push_back(field);
        CHECK(std::stod(f[4]) < 0.01);
    }
}

TEST_CASE("cmd_train writes paired, complete, deterministic outputs") {
    const fs::path dir_a = fresh_dir("fedpsi_cmd_train_a");
    ExperimentConfig config = small_config(dir_a);
    config.methods = {"fedavg", "fedprox", "clust_psi_pfl", "centralized"};
    CHECK(cmd_train(config) == 0);

    const std::string summary = read_file(dir_a / "summary.csv");
    // header + (2 cells x 2 seeds x 3 cell methods) + 2 centralized rows
    CHECK(count_lines(summary) == 1 + 12 + 2);
    CHECK(summary.rfind("run_id,method,protocol,parameter,seed,global_accuracy,ad,sdad,tau\n",
                        0) == 0);

    const std::string locals = read_file(dir_a / "local_metrics.csv");
    // 6 clients per cell run, 1 pseudo-client per centralized run
    CHECK(count_lines(locals) == 1 + 12 * 6 + 2);

    // every cell appears once in the manifest with a known status, and
    // initialization checksums pair across methods
    const json manifest = json::parse(read_file(dir_a / "manifest.json"));
    CHECK(manifest["cells"].size() == 14);
    std::map<std::string, std::set<std::string>> init_by_run;
    for (const auto& row : manifest["cells"]) {
        CHECK((row["status"] == "ok" || row["status"] == "infeasible" ||
               row["status"] == "diverged"));
        if (row["method"] == "centralized") continue;
        init_by_run[row["run_id"].get<std::string>()].insert(
            row["init_checksum"].get<std::string>());
        if (row["method"] == "clust_psi_pfl") CHECK(row.contains("tau"));
    }
    for (const auto& [run, checksums] : init_by_run) {
        CHECK(checksums.size() == 1); // identical init across methods
    }

    // tau column is populated only for the clustered method
    std::istringstream rows(summary);
    std::string line;
    std::getline(rows, line);
    while (std::getline(rows, line)) {
        const bool clustered = line.find(",clust_psi_pfl,") != std::string::npos;
        const bool has_tau = line.back() != ',';
        CHECK(clustered == has_tau);
    }

    // cluster reports and checkpoints exist for the clustered method
    const json cluster_report =
        json::parse(read_file(dir_a / "cluster_reports" / "dirichlet-0.5-k6-r0.json"));
    CHECK(cluster_report.contains("tau"));
    CHECK(cluster_report.contains("silhouette"));
    CHECK(cluster_report["assignments"].size() == 6);
    CHECK(!cluster_report["candidates"].empty());
    CHECK(fs::exists(dir_a / "checkpoints" / "dirichlet-0.5-k6-r0-fedavg.bin"));
    CHECK(fs::exists(dir_a / "checkpoints" / "centralized-r0-centralized.json"));

    // byte-identical rerun in a different directory
    const fs::path dir_b = fresh_dir("fedpsi_cmd_train_b");
    config.output_dir = dir_b.string();
    CHECK(cmd_train(config) == 0);
    CHECK(read_file(dir_b / "summary.csv") == summary);
    CHECK(read_file(dir_b / "local_metrics.csv") == locals);
    CHECK(read_file(dir_b / "rounds.jsonl") == read_file(dir_a / "rounds.jsonl"));

    // jobs > 1 cannot change any output byte
    const fs::path dir_c = fresh_dir("fedpsi_cmd_train_c");
    config.output_dir = dir_c.string();
    config.jobs = 4;
    CHECK(cmd_train(config) == 0);
    CHECK(read_file(dir_c / "summary.csv") == summary);
    CHECK(read_file(dir_c / "rounds.jsonl") == read_file(dir_a / "rounds.jsonl"));
}

TEST_CASE("cmd_train survives infeasible cells") {
    const fs::path dir = fresh_dir("fedpsi_cmd_train_infeasible");
    ExperimentConfig config = small_config(dir);
    config.synthetic_spec.num_classes = 2;
    config.synthetic_spec.examples_per_class = 10;
    config.grid = {0.05};
    config.k_list = {10};
    config.methods = {"fedavg"};
    CHECK(cmd_train(config) == 0);
    const json manifest = json::parse(read_file(dir / "manifest.json"));
    for (const auto& row : manifest["cells"]) CHECK(row["status"] == "infeasible");
    CHECK(count_lines(read_file(dir / "summary.csv")) == 1); // header only
}

TEST_CASE("cmd_compare aggregates and reports the ad reduction") {
    const fs::path dir = fresh_dir("fedpsi_cmd_compare");
    const std::string header =
        "run_id,method,protocol,parameter,seed,global_accuracy,ad,sdad,tau\n";
    {
        std::ofstream out(dir / "summary.csv");
        out << header;
        for (int rep = 0; rep < 5; ++rep) {
            out << "similarity-0-k12-r" << rep << ",clust_psi_pfl,similarity,0," << rep
                << ",0.98,0.17,0.02,3\n";
            out << "similarity-0-k12-r" << rep << ",fedavg,similarity,0," << rep
                << ",0.70,0.27,0.28,\n";
        }
    }
    CHECK(cmd_compare({(dir / "summary.csv").string()},
                      (dir / "comparison.json").string()) == 0);
    const json report = json::parse(read_file(dir / "comparison.json"));
    CHECK(report["std_kind"] == "sample");
    CHECK(report["empty"] == false);
    REQUIRE(report["cells"].size() == 1);
    const auto& cell = report["cells"][0];
    CHECK(cell["cell"] == "similarity-0-k12");
    // (0.27 - 0.17) / 0.27 = 37.04% relative reduction
    CHECK(cell["ad_relative_reduction_pct"].get<double>() ==
          doctest::Approx(37.037037).epsilon(1e-4));
    for (const auto& method : cell["methods"]) {
        if (method["method"] == "fedavg") {
            CHECK(method["ad_mean"].get<double>() == doctest::Approx(0.27));
            CHECK(method["ad_std"].get<double>() == doctest::Approx(0.0));
            CHECK(method["n"] == 5);
        }
    }
}

TEST_CASE("cmd_compare: identical methods give zero reduction; empty input is explicit") {
    const fs::path dir = fresh_dir("fedpsi_cmd_compare_edge");
    const std::string header =
        "run_id,method,protocol,parameter,seed,global_accuracy,ad,sdad,tau\n";
    {
        std::ofstream out(dir / "same.csv");
        out << header;
        out << "dirichlet-0.3-k10-r0,clust_psi_pfl,dirichlet,0.3,0,0.9,0.2,0.1,3\n";
        out << "dirichlet-0.3-k10-r0,fedavg,dirichlet,0.3,0,0.9,0.2,0.1,\n";
    }
    CHECK(cmd_compare({(dir / "same.csv").string()}, (dir / "same.json").string()) == 0);
    const json same = json::parse(read_file(dir / "same.json"));
    CHECK(same["cells"][0]["ad_relative_reduction_pct"].get<double>() ==
          doctest::Approx(0.0));

    {
        std::ofstream out(dir / "empty.csv");
        out << header;
    }
    CHECK(cmd_compare({(dir / "empty.csv").string()}, (dir / "empty.json").string()) == 0);
    const json empty = json::parse(read_file(dir / "empty.json"));
    CHECK(empty["empty"] == true);
    CHECK(empty["cells"].empty());

    {
        std::ofstream out(dir / "bad.csv");
        out << "something,else\n";
    }
    CHECK(cmd_compare({(dir / "bad.csv").string()}, (dir / "bad.json").string()) == 2);
}

TEST_CASE("cli exit codes") {
    const fs::path dir = fresh_dir("fedpsi_cli");
    const fs::path config_path = dir / "config.json";
    {
        std::ofstream out(config_path);
        out << R"({"dataset": {"type": "synthetic", "num_classes": 3,
                   "examples_per_class": 60, "class_separation": 6.0, "seed": 2},
                   "protocol": "similarity", "grid": [0.0], "k_list": [3],
                   "methods": ["fedavg"],
                   "train": {"rounds": 1, "local_epochs": 1, "batch_size": 16},
                   "num_seeds": 1, "seed": 3,
                   "output_dir": ")" << (dir / "out").string() << R"("})";
    }
    CHECK(run_cli("train --config " + config_path.string()) == 0);
    CHECK(fs::exists(dir / "out" / "summary.csv"));

    // seed override changes the partition stream deterministically
    CHECK(run_cli("partition --config " + config_path.string() + " --seed 99 --out " +
                  (dir / "out2").string()) == 0);
    CHECK(fs::exists(dir / "out2" / "partition_manifest.json"));

    const fs::path bad = dir / "bad.json";
    {
        std::ofstream out(bad);
        out << "{\"dataset\": 12}";
    }
    CHECK(run_cli("train --config " + bad.string()) == 1);
    CHECK(run_cli("train --config /nonexistent/config.json") == 1);
    CHECK(run_cli("nonsense") == 1);
}

} // TEST_SUITE
