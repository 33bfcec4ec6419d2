#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedpsi/dataset.hpp"
#include "fedpsi/federation.hpp"
#include "fedpsi/partition.hpp"

namespace fedpsi {

// Experiment definition: one dataset, one protocol with a parameter grid,
// client counts, methods, and seeded repetition. Parsed from a single JSON
// document; all defaults are echoed into the run manifest so outputs are
// self-describing.
struct ExperimentConfig {
    bool synthetic = true;
    SyntheticSpec synthetic_spec;
    std::string csv_path;
    std::string label_column = "label";

    Protocol protocol = Protocol::Dirichlet;
    std::vector<double> grid;
    std::vector<int> k_list;
    std::vector<std::string> methods;

    TrainConfig train;
    int num_seeds = 1;
    double epsilon = 1e-6;
    double test_fraction = 0.2;
    int min_per_client = 2;
    std::uint64_t master_seed = 0;
    std::string output_dir = "out";
    int jobs = 1;

    // Throws ConfigError on unknown fields, bad types, or invariant
    // violations.
    static ExperimentConfig from_json_file(const std::string& path);
    static ExperimentConfig from_json_text(const std::string& text);

    void validate() const;
    Dataset load_dataset() const;
};

// Sub-seed roles used by the harness; the derivation itself is
// derive_seed(master, role, cell_index, repetition) (see rng.hpp).
// cell_index enumerates grid x k_list in row-major order.

// Writes one partition JSON per feasible (parameter, k, seed) cell plus
// manifest.json; infeasible cells are recorded with status "infeasible".
// Returns a process exit code (0 also covers infeasible cells).
int cmd_partition(const ExperimentConfig& config);

// metrics.csv with one row per feasible cell: protocol, parameter, seed, k,
// wpsi, hd, jsd, emd at 12 significant digits. Whole-file overwrite per
// invocation keeps reruns idempotent.
int cmd_sweep(const ExperimentConfig& config);

// Runs every (cell x seed x method): summary.csv, local_metrics.csv,
// rounds.jsonl, final-model checkpoints, and manifest.json. Methods within a
// cell share the partition and the training seed, so initializations pair
// across methods (checksums recorded). Diverged cells are recorded and the
// run continues.
int cmd_train(const ExperimentConfig& config);

// Aggregates summary.csv files: per cell and method, mean +- std (sample
// std, labeled in the output) of global accuracy, AD, and SDAD, plus the
// relative AD reduction of the best clustered method against the best
// non-clustered one.
int cmd_compare(const std::vector<std::string>& summary_paths,
                const std::string& report_path);

} // namespace fedpsi
