#include "fedpsi/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedpsi/errors.hpp"
#include "fedpsi/parallel.hpp"

namespace fedpsi {

double local_accuracy(const ModelParameters& params, const Dataset& data,
                      std::span<const std::size_t> test_idx) {
    if (test_idx.empty()) throw EmptyShard("local_accuracy: empty test shard");
    std::size_t correct = 0;
    for (const std::size_t idx : test_idx) {
        if (model_predict(params, data.row(idx)) == data.labels[idx]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test_idx.size());
}

double global_accuracy(std::span<const ClientAccuracy> per_client) {
    if (per_client.empty()) throw EmptyFederation("global_accuracy: no clients");
    double weighted = 0.0;
    std::int64_t total = 0;
    for (const auto& entry : per_client) {
        if (entry.n_test <= 0) throw RangeError("global_accuracy: n_test must be > 0");
        weighted += static_cast<double>(entry.n_test) * entry.accuracy;
        total += entry.n_test;
    }
    return weighted / static_cast<double>(total);
}

std::pair<double, double> fairness(std::span<const double> accuracies) {
    if (accuracies.empty()) throw EmptyFederation("fairness: no clients");
    const double k = static_cast<double>(accuracies.size());
    double ad = 0.0;
    for (const double a : accuracies) ad += std::fabs(a - 1.0);
    ad /= k;
    double var = 0.0;
    for (const double a : accuracies) {
        const double diff = std::fabs(a - 1.0) - ad;
        var += diff * diff;
    }
    return {ad, std::sqrt(var / k)};
}

std::vector<std::pair<double, double>> ecdf_points(std::span<const double> accuracies) {
    if (accuracies.empty()) throw EmptyFederation("ecdf: no clients");
    std::vector<double> sorted(accuracies.begin(), accuracies.end());
    std::sort(sorted.begin(), sorted.end());
    const double k = static_cast<double>(sorted.size());
    std::vector<std::pair<double, double>> points;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const double fraction = static_cast<double>(i + 1) / k;
        if (!points.empty() && points.back().first == sorted[i]) {
            points.back().second = fraction; // merge ties at the highest fraction
        } else {
            points.emplace_back(sorted[i], fraction);
        }
    }
    return points;
}

AccuracyReport evaluate_partition(const Dataset& data, const ClientPartition& part,
                                  const std::vector<const ModelParameters*>& model_per_client) {
    if (model_per_client.size() != static_cast<std::size_t>(part.num_clients))
        throw ShapeError("evaluate_partition: one model pointer per client required");

    AccuracyReport report;
    report.per_client.resize(part.num_clients);
    parallel_for(static_cast<std::size_t>(part.num_clients), [&](std::size_t i) {
        const int client = static_cast<int>(i);
        report.per_client[i] = {
            client, static_cast<std::int64_t>(part.test_indices[client].size()),
            local_accuracy(*model_per_client[i], data, part.test_indices[client])};
    });
    report.global_accuracy = global_accuracy(report.per_client);
    std::vector<double> accuracies;
    accuracies.reserve(report.per_client.size());
    for (const auto& entry : report.per_client) accuracies.push_back(entry.accuracy);
    std::tie(report.ad, report.sdad) = fairness(accuracies);
    return report;
}

} // namespace fedpsi
