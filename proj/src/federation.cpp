#include "fedpsi/federation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "fedpsi/errors.hpp"
#include "fedpsi/evaluation.hpp"
#include "fedpsi/parallel.hpp"
#include "fedpsi/rng.hpp"

namespace fedpsi {

std::string method_name(Method m) {
    switch (m) {
    case Method::FedAvg: return "fedavg";
    case Method::FedProx: return "fedprox";
    case Method::FedAvgM: return "fedavgm";
    case Method::Centralized: return "centralized";
    }
    return "unknown";
}

void TrainConfig::validate() const {
    if (rounds < 1) throw SpecError("train config: rounds must be >= 1");
    if (!(client_fraction > 0.0 && client_fraction <= 1.0))
        throw SpecError("train config: client_fraction must be in (0, 1]");
    if (local_epochs < 1) throw SpecError("train config: local_epochs must be >= 1");
    if (batch_size < 1) throw SpecError("train config: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw SpecError("train config: learning_rate must be > 0");
    if (prox_mu < 0.0) throw SpecError("train config: prox_mu must be >= 0");
    if (!(server_momentum >= 0.0 && server_momentum < 1.0))
        throw SpecError("train config: server_momentum must be in [0, 1)");
    if (!(server_lr > 0.0)) throw SpecError("train config: server_lr must be > 0");
    if (model == ModelKind::Mlp && hidden < 1)
        throw SpecError("train config: hidden must be >= 1 for the mlp model");
}

std::string params_checksum(const ModelParameters& params) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const double v : params.values) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) {
            h ^= static_cast<unsigned char>(bits >> (8 * i));
            h *= 0x100000001b3ull;
        }
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ModelParameters local_train(const ModelParameters& start, const Dataset& data,
                            std::span<const std::size_t> shard, const TrainConfig& cfg,
                            int client_id, int round) {
    if (shard.empty())
        throw EmptyShard("local_train: empty shard for client " + std::to_string(client_id));

    ModelParameters params = start;
    const bool proximal = cfg.method == Method::FedProx && cfg.prox_mu != 0.0;
    Rng rng(derive_seed(cfg.seed, "local_train", static_cast<std::uint64_t>(client_id),
                        static_cast<std::uint64_t>(round)));
    std::vector<std::size_t> order(shard.begin(), shard.end());
    std::vector<double> grad(params.values.size());
    const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        for (std::size_t lo = 0; lo < order.size(); lo += batch) {
            const std::size_t hi = std::min(lo + batch, order.size());
            const double loss = batch_loss_grad(
                params, data, std::span<const std::size_t>(order).subspan(lo, hi - lo), grad);
            if (!std::isfinite(loss))
                throw DivergedError("local_train: non-finite loss on client " +
                                    std::to_string(client_id) + " at round " +
                                    std::to_string(round));
            if (proximal) {
                for (std::size_t i = 0; i < grad.size(); ++i) {
                    grad[i] += cfg.prox_mu * (params.values[i] - start.values[i]);
                }
            }
            for (std::size_t i = 0; i < grad.size(); ++i) {
                params.values[i] -= cfg.learning_rate * grad[i];
            }
        }
    }
    return params;
}

ModelParameters fedavg_aggregate(
    const std::vector<std::pair<ModelParameters, std::int64_t>>& updates) {
    if (updates.empty()) throw EmptyFederation("aggregate: no updates");
    const ModelShape& shape = updates[0].first.shape;
    std::int64_t total = 0;
    for (const auto& [params, count] : updates) {
        if (!(params.shape == shape)) throw ShapeError("aggregate: shape mismatch");
        if (count <= 0) throw RangeError("aggregate: sample counts must be > 0");
        total += count;
    }

    ModelParameters out = updates[0].first;
    double weight_sum = 0.0;
    for (const auto& [params, count] : updates) {
        const double w = static_cast<double>(count) / static_cast<double>(total);
        weight_sum += w;
        for (std::size_t i = 0; i < out.values.size(); ++i) {
            out.values[i] += w * (params.values[i] - updates[0].first.values[i]);
        }
    }
    if (std::fabs(weight_sum - 1.0) > 1e-12)
        throw RangeError("aggregate: weights sum to " + std::to_string(weight_sum));
    return out;
}

std::pair<ModelParameters, ModelParameters> fedavgm_server_update(
    const ModelParameters& global, const ModelParameters& aggregate,
    const ModelParameters& velocity, double momentum, double server_lr) {
    if (!(global.shape == aggregate.shape) || !(global.shape == velocity.shape))
        throw ShapeError("fedavgm: shape mismatch");

    ModelParameters new_velocity = velocity;
    for (std::size_t i = 0; i < new_velocity.values.size(); ++i) {
        new_velocity.values[i] = momentum * velocity.values[i] +
                                 (global.values[i] - aggregate.values[i]);
    }
    if (momentum == 0.0 && server_lr == 1.0) {
        return {aggregate, std::move(new_velocity)};
    }
    ModelParameters new_global = global;
    for (std::size_t i = 0; i < new_global.values.size(); ++i) {
        new_global.values[i] = global.values[i] - server_lr * new_velocity.values[i];
    }
    return {std::move(new_global), std::move(new_velocity)};
}

namespace {

std::vector<int> sample_participants(std::span<const int> pool, double fraction,
                                     std::uint64_t seed) {
    std::vector<int> ids(pool.begin(), pool.end());
    std::sort(ids.begin(), ids.end());
    const std::size_t take = std::max<std::size_t>(
        1, static_cast<std::size_t>(
               std::lround(fraction * static_cast<double>(ids.size()))));
    Rng rng(seed);
    for (std::size_t i = 0; i < take && i + 1 < ids.size(); ++i) {
        const std::size_t j = i + rng.below(ids.size() - i);
        std::swap(ids[i], ids[j]);
    }
    ids.resize(std::min(take, ids.size()));
    std::sort(ids.begin(), ids.end());
    return ids;
}

double pool_test_accuracy(const Dataset& data, const ClientPartition& part,
                          std::span<const int> pool, const ModelParameters& params) {
    std::vector<double> accuracies(pool.size());
    std::vector<std::int64_t> counts(pool.size());
    parallel_for(pool.size(), [&](std::size_t i) {
        const int client = pool[i];
        accuracies[i] = local_accuracy(params, data, part.test_indices[client]);
        counts[i] = static_cast<std::int64_t>(part.test_indices[client].size());
    });
    double weighted = 0.0;
    std::int64_t total = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        weighted += static_cast<double>(counts[i]) * accuracies[i];
        total += counts[i];
    }
    return total > 0 ? weighted / static_cast<double>(total) : 0.0;
}

} // namespace

FederationResult run_federation(const Dataset& data, const ClientPartition& part,
                                std::span<const int> pool, const TrainConfig& cfg,
                                int cluster_tag) {
    cfg.validate();
    if (pool.empty()) throw EmptyFederation("run_federation: empty client pool");
    for (const int client : pool) {
        if (client < 0 || client >= part.num_clients)
            throw RangeError("run_federation: client " + std::to_string(client) +
                             " not in partition");
        if (part.train_indices[client].empty() || part.test_indices[client].empty())
            throw EmptyShard("run_federation: client " + std::to_string(client) +
                             " lacks a train/test split");
    }

    const ModelShape shape{cfg.model, static_cast<int>(data.dims), data.num_classes,
                           cfg.hidden};
    ModelParameters global = init_params(shape, derive_seed(cfg.seed, "init"));
    ModelParameters velocity = global;
    std::fill(velocity.values.begin(), velocity.values.end(), 0.0);

    const std::uint64_t cluster_key = static_cast<std::uint64_t>(cluster_tag + 1);
    FederationResult result;
    result.logs.reserve(cfg.rounds);

    for (int round = 0; round < cfg.rounds; ++round) {
        const std::vector<int> participants = sample_participants(
            pool, cfg.client_fraction,
            derive_seed(cfg.seed, "round_sample", cluster_key,
                        static_cast<std::uint64_t>(round)));

        std::vector<std::pair<ModelParameters, std::int64_t>> updates(participants.size());
        parallel_for(participants.size(), [&](std::size_t i) {
            const int client = participants[i];
            updates[i] = {local_train(global, data, part.train_indices[client], cfg,
                                      client, round),
                          static_cast<std::int64_t>(part.train_indices[client].size())};
        });

        const ModelParameters aggregate = fedavg_aggregate(updates);
        if (cfg.method == Method::FedAvgM) {
            auto [next_global, next_velocity] = fedavgm_server_update(
                global, aggregate, velocity, cfg.server_momentum, cfg.server_lr);
            global = std::move(next_global);
            velocity = std::move(next_velocity);
        } else {
            global = aggregate;
        }

        RoundLog log;
        log.round = round;
        log.cluster = cluster_tag;
        log.participants = participants;
        log.params_checksum = params_checksum(global);
        log.global_accuracy = pool_test_accuracy(data, part, pool, global);
        if (cluster_tag >= 0) log.per_cluster = {{cluster_tag, log.global_accuracy}};
        result.logs.push_back(std::move(log));
    }
    result.params = std::move(global);
    return result;
}

ClustPsiResult run_clust_psi_pfl(const Dataset& data, const ClientPartition& part,
                                 const TrainConfig& cfg, double epsilon,
                                 std::uint64_t cluster_seed) {
    cfg.validate();
    std::vector<LabelHistogram> histograms;
    histograms.reserve(part.num_clients);
    for (int client = 0; client < part.num_clients; ++client) {
        histograms.push_back(part.train_histogram(data, client));
    }

    ClustPsiResult result;
    result.assignment =
        select_tau(psi_features(histograms, epsilon), cluster_seed, &result.candidates);

    for (int cluster = 0; cluster < result.assignment.tau; ++cluster) {
        std::vector<int> members;
        for (int client = 0; client < part.num_clients; ++client) {
            if (result.assignment.labels[client] == cluster) members.push_back(client);
        }
        FederationResult fed = run_federation(data, part, members, cfg, cluster);
        result.cluster_models.emplace_back(cluster, std::move(fed.params));
        for (auto& log : fed.logs) result.logs.push_back(std::move(log));
    }
    return result;
}

ModelParameters centralized_baseline(const Dataset& data,
                                     std::span<const std::size_t> train_idx,
                                     const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.method != Method::Centralized)
        throw SpecError("centralized_baseline: method must be Centralized");
    if (train_idx.empty()) throw EmptyShard("centralized_baseline: no training data");

    const ModelShape shape{cfg.model, static_cast<int>(data.dims), data.num_classes,
                           cfg.hidden};
    ModelParameters params = init_params(shape, derive_seed(cfg.seed, "init"));
    Rng rng(derive_seed(cfg.seed, "central"));
    std::vector<std::size_t> order(train_idx.begin(), train_idx.end());
    std::vector<double> grad(params.values.size());
    const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
    const int epochs = cfg.rounds * cfg.local_epochs;

    for (int epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        for (std::size_t lo = 0; lo < order.size(); lo += batch) {
            const std::size_t hi = std::min(lo + batch, order.size());
            const double loss = batch_loss_grad(
                params, data, std::span<const std::size_t>(order).subspan(lo, hi - lo), grad);
            if (!std::isfinite(loss))
                throw DivergedError("centralized_baseline: non-finite loss at epoch " +
                                    std::to_string(epoch));
            for (std::size_t i = 0; i < grad.size(); ++i) {
                params.values[i] -= cfg.learning_rate * grad[i];
            }
        }
    }
    return params;
}

ModelParameters centralized_baseline(const Dataset& data, const TrainConfig& cfg) {
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return centralized_baseline(data, all, cfg);
}

void save_checkpoint(const ModelParameters& params, const std::string& path_prefix) {
    static_assert(std::endian::native == std::endian::little,
                  "checkpoint format is little-endian");
    nlohmann::json header;
    header["kind"] = params.shape.kind == ModelKind::Linear ? "linear" : "mlp";
    header["input_dim"] = params.shape.input_dim;
    header["num_classes"] = params.shape.num_classes;
    header["hidden"] = params.shape.hidden;
    header["count"] = params.values.size();
    std::ofstream meta(path_prefix + ".json");
    if (!meta) throw IngestError("checkpoint: cannot write '" + path_prefix + ".json'");
    meta << header.dump(2) << "\n";

    std::ofstream bin(path_prefix + ".bin", std::ios::binary);
    if (!bin) throw IngestError("checkpoint: cannot write '" + path_prefix + ".bin'");
    bin.write(reinterpret_cast<const char*>(params.values.data()),
              static_cast<std::streamsize>(params.values.size() * sizeof(double)));
    if (!bin) throw IngestError("checkpoint: write failed for '" + path_prefix + ".bin'");
}

ModelParameters load_checkpoint(const std::string& path_prefix) {
    std::ifstream meta(path_prefix + ".json");
    if (!meta) throw IngestError("checkpoint: cannot open '" + path_prefix + ".json'");
    nlohmann::json header;
    try {
        meta >> header;
    } catch (const nlohmann::json::exception& e) {
        throw IngestError(std::string("checkpoint: invalid header: ") + e.what());
    }
    ModelParameters params;
    const std::string kind = header.at("kind").get<std::string>();
    params.shape.kind = kind == "linear" ? ModelKind::Linear : ModelKind::Mlp;
    params.shape.input_dim = header.at("input_dim").get<int>();
    params.shape.num_classes = header.at("num_classes").get<int>();
    params.shape.hidden = header.at("hidden").get<int>();
    const auto count = header.at("count").get<std::size_t>();

    std::ifstream bin(path_prefix + ".bin", std::ios::binary);
    if (!bin) throw IngestError("checkpoint: cannot open '" + path_prefix + ".bin'");
    params.values.resize(count);
    bin.read(reinterpret_cast<char*>(params.values.data()),
             static_cast<std::streamsize>(count * sizeof(double)));
    if (bin.gcount() != static_cast<std::streamsize>(count * sizeof(double)))
        throw IngestError("checkpoint: truncated '" + path_prefix + ".bin'");
    params.validate();
    return params;
}

} // namespace fedpsi
