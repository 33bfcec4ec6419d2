#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "fedpsi/dataset.hpp"
#include "fedpsi/model.hpp"
#include "fedpsi/partition.hpp"

namespace fedpsi {

struct ClientAccuracy {
    int client_id = -1;
    std::int64_t n_test = 0;
    double accuracy = 0.0;
};

// Per-client accuracies with their sample-weighted global aggregate and the
// client-fairness statistics AD / SDAD (distances |A_k - 1|, unweighted over
// clients, population normalization).
struct AccuracyReport {
    std::vector<ClientAccuracy> per_client;
    double global_accuracy = 0.0;
    double ad = 0.0;
    double sdad = 0.0;
};

// Fraction of the shard classified correctly (argmax with tie-break toward
// the smaller class id).
double local_accuracy(const ModelParameters& params, const Dataset& data,
                      std::span<const std::size_t> test_idx);

double global_accuracy(std::span<const ClientAccuracy> per_client);

// (AD, SDAD) over the given accuracies.
std::pair<double, double> fairness(std::span<const double> accuracies);

// ECDF step points (value ascending, cumulative fraction); ties merge at the
// highest fraction, so the last fraction is always 1.
std::vector<std::pair<double, double>> ecdf_points(std::span<const double> accuracies);

// Evaluates every client of the partition on its test shard with the model
// given per client (clustered methods pass different models per client).
AccuracyReport evaluate_partition(const Dataset& data, const ClientPartition& part,
                                  const std::vector<const ModelParameters*>& model_per_client);

} // namespace fedpsi
