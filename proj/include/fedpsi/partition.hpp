#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedpsi/dataset.hpp"

namespace fedpsi {

enum class Protocol { Dirichlet, Similarity };

std::string protocol_name(Protocol p);

// Assignment of example indices to K simulated clients, with an optional
// per-client train/test split. Index lists are kept sorted ascending.
struct ClientPartition {
    int num_clients = 0;
    Protocol protocol = Protocol::Dirichlet;
    double parameter = 0.0;
    std::uint64_t seed = 0;
    std::vector<std::vector<std::size_t>> train_indices;
    std::vector<std::vector<std::size_t>> test_indices;

    std::size_t client_size(int client) const {
        return train_indices[client].size() + test_indices[client].size();
    }

    // Disjointness within and across clients, index bounds, and (when
    // require_split) non-empty train and test sides for every client.
    void validate(std::size_t dataset_size, bool require_split) const;

    LabelHistogram train_histogram(const Dataset& data, int client) const;
};

// Per class, draws client proportions from a symmetric Dirichlet(alpha) and
// assigns each example of that class independently by those proportions.
// Every client must end with >= max(2, min_per_client) examples; violations
// are resampled with derived sub-seeds up to max_attempts times before
// InfeasiblePartition is raised.
ClientPartition partition_dirichlet(const Dataset& data, int k, double alpha,
                                    std::uint64_t seed, int min_per_client = 2,
                                    int max_attempts = 100);

// Deals a uniformly random floor(s*N)-subset round-robin to clients (IID
// component), then sorts the remainder by label and hands out K contiguous
// shards to clients 0..K-1 in order. Shard sizes are deterministic in
// (N, K, s), so infeasible configurations fail immediately.
ClientPartition partition_similarity(const Dataset& data, int k, double s,
                                     std::uint64_t seed, int min_per_client = 2);

// Re-splits each client's full index set uniformly at random, stratified by
// label: every class with m >= 2 examples sends min(ceil(fraction*m), m-1)
// of them to test; singleton classes stay in train. Clients whose classes
// are all singletons fall back to an unstratified split clamped so both
// sides stay non-empty.
ClientPartition split_train_test(const ClientPartition& part, const Dataset& data,
                                 double test_fraction, std::uint64_t seed);

// JSON schema: {num_clients, protocol, parameter, seed,
//               clients: [{id, train: [...], test: [...]}]},
// clients ordered by id, indices ascending; output bytes are stable.
void save_partition_json(const ClientPartition& part, const std::string& path);
ClientPartition load_partition_json(const std::string& path);

} // namespace fedpsi
