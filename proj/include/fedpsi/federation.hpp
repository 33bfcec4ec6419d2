#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedpsi/clustering.hpp"
#include "fedpsi/dataset.hpp"
#include "fedpsi/model.hpp"
#include "fedpsi/partition.hpp"

namespace fedpsi {

enum class Method { FedAvg, FedProx, FedAvgM, Centralized };

std::string method_name(Method m);

struct TrainConfig {
    int rounds = 40;
    double client_fraction = 0.5;
    int local_epochs = 5;
    int batch_size = 32;
    double learning_rate = 0.05;
    Method method = Method::FedAvg;
    double prox_mu = 0.0;       // FedProx
    double server_momentum = 0.0; // FedAvgM
    double server_lr = 1.0;       // FedAvgM
    ModelKind model = ModelKind::Linear;
    int hidden = 32;
    std::uint64_t seed = 0;

    void validate() const;
};

struct RoundLog {
    int round = 0;
    int cluster = -1; // -1 for a whole-pool federation
    std::vector<int> participants;
    std::string params_checksum;
    double global_accuracy = 0.0;
    std::vector<std::pair<int, double>> per_cluster;
};

// FNV-1a over the raw parameter bits, as a 16-hex-digit string.
std::string params_checksum(const ModelParameters& params);

// E epochs of mini-batch gradient descent on softmax cross-entropy; FedProx
// adds mu * (w - w_start) to the gradient. Batch order is derived from
// (cfg.seed, client_id, round). The input is untouched.
ModelParameters local_train(const ModelParameters& start, const Dataset& data,
                            std::span<const std::size_t> shard, const TrainConfig& cfg,
                            int client_id, int round);

// Sample-count-weighted mean in the given (ascending client id) order,
// accumulated as base + sum w_i * (x_i - base) so identical updates aggregate
// to themselves exactly.
ModelParameters fedavg_aggregate(
    const std::vector<std::pair<ModelParameters, std::int64_t>>& updates);

// delta = global - aggregate; v' = momentum * v + delta;
// new_global = global - server_lr * v'. The (momentum=0, server_lr=1) case
// assigns the aggregate directly, which is the same value in exact
// arithmetic and keeps the FedAvg reduction bit-exact.
std::pair<ModelParameters, ModelParameters> fedavgm_server_update(
    const ModelParameters& global, const ModelParameters& aggregate,
    const ModelParameters& velocity, double momentum, double server_lr);

struct FederationResult {
    ModelParameters params;
    std::vector<RoundLog> logs;
};

// T rounds over the given client pool; each round samples
// max(1, lround(q * |pool|)) clients without replacement from a per-round
// seeded stream, trains them (in parallel; results reduce in ascending
// client-id order), aggregates per the method, and logs checksum and
// weighted test accuracy over the whole pool.
FederationResult run_federation(const Dataset& data, const ClientPartition& part,
                                std::span<const int> pool, const TrainConfig& cfg,
                                int cluster_tag = -1);

struct ClustPsiResult {
    ClusterAssignment assignment;
    std::vector<CandidateScore> candidates;
    std::vector<std::pair<int, ModelParameters>> cluster_models;
    std::vector<RoundLog> logs;
};

// Clust-PSI-PFL driver: PSI features from train-split label histograms only,
// tau selection, then one independent FedAvg-style federation per cluster
// (same T, q, E; q-sampling floors at one participant).
ClustPsiResult run_clust_psi_pfl(const Dataset& data, const ClientPartition& part,
                                 const TrainConfig& cfg, double epsilon,
                                 std::uint64_t cluster_seed);

// One model on the pooled indices for a T*E epoch budget.
ModelParameters centralized_baseline(const Dataset& data,
                                     std::span<const std::size_t> train_idx,
                                     const TrainConfig& cfg);
ModelParameters centralized_baseline(const Dataset& data, const TrainConfig& cfg);

// Flat little-endian 64-bit reals at <prefix>.bin plus a JSON shape header at
// <prefix>.json.
void save_checkpoint(const ModelParameters& params, const std::string& path_prefix);
ModelParameters load_checkpoint(const std::string& path_prefix);

} // namespace fedpsi
