// fedpsi: seeded federated-learning simulation harness.
//
//   fedpsi partition|sweep|train|compare --config <path> [--out <dir>]
//                                        [--jobs <n>] [--seed <u64>]
//
// Exit codes: 0 success (including infeasible grid cells), 1 config error,
// 2 runtime failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedpsi/errors.hpp"
#include "fedpsi/harness.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::string jobs;
    std::string seed;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "experiment config JSON")->required();
    cmd->add_option("--out", opts.out_dir, "override output directory");
    cmd->add_option("--jobs", opts.jobs, "parallel cell jobs");
    cmd->add_option("--seed", opts.seed, "override master seed");
}

fedpsi::ExperimentConfig load_config(const CommonOpts& opts) {
    fedpsi::ExperimentConfig config = fedpsi::ExperimentConfig::from_json_file(opts.config_path);
    if (!opts.out_dir.empty()) config.output_dir = opts.out_dir;
    if (!opts.jobs.empty()) {
        try {
            config.jobs = std::stoi(opts.jobs);
        } catch (const std::exception&) {
            throw fedpsi::ConfigError("--jobs must be an integer");
        }
    }
    if (!opts.seed.empty()) {
        try {
            config.master_seed = std::stoull(opts.seed);
        } catch (const std::exception&) {
            throw fedpsi::ConfigError("--seed must be a 64-bit unsigned integer");
        }
    }
    config.validate();
    return config;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"PSI-clustered personalized federated learning simulator"};
    app.require_subcommand(1);

    CommonOpts partition_opts, sweep_opts, train_opts;
    CLI::App* partition = app.add_subcommand("partition", "write client partition files");
    add_common(partition, partition_opts);
    CLI::App* sweep = app.add_subcommand("sweep", "divergence metric sweep over the grid");
    add_common(sweep, sweep_opts);
    CLI::App* train = app.add_subcommand("train", "train all methods over the grid");
    add_common(train, train_opts);

    std::string compare_config, compare_out;
    CLI::App* compare = app.add_subcommand("compare", "aggregate summary.csv files");
    compare->add_option("--config", compare_config,
                        "JSON with {\"summaries\": [paths...]}")->required();
    compare->add_option("--out", compare_out, "report output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (partition->parsed()) return fedpsi::cmd_partition(load_config(partition_opts));
        if (sweep->parsed()) return fedpsi::cmd_sweep(load_config(sweep_opts));
        if (train->parsed()) return fedpsi::cmd_train(load_config(train_opts));
        if (compare->parsed()) {
            std::ifstream in(compare_config);
            if (!in) throw fedpsi::ConfigError("cannot open '" + compare_config + "'");
            nlohmann::json doc;
            try {
                in >> doc;
            } catch (const nlohmann::json::exception& e) {
                throw fedpsi::ConfigError(std::string("compare config: ") + e.what());
            }
            if (!doc.contains("summaries") || !doc["summaries"].is_array())
                throw fedpsi::ConfigError("compare config: 'summaries' array required");
            const auto paths = doc["summaries"].get<std::vector<std::string>>();
            const std::string out_dir = compare_out.empty()
                                            ? doc.value("output_dir", std::string("out"))
                                            : compare_out;
            return fedpsi::cmd_compare(
                paths, (std::filesystem::path(out_dir) / "comparison.json").string());
        }
    } catch (const fedpsi::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
