// Benchmark comparing the serial reference execution against the OpenMP
// kernels on the three hot paths: per-round client training, the
// cluster-count sweep, and the divergence sweep. Also verifies both modes
// produce bit-identical results.
//
//   fedpsi-bench [--threads <n>] [--scenario federation|tau|sweep|all]

#include <chrono>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include <CLI11.hpp>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "fedpsi/clustering.hpp"
#include "fedpsi/dataset.hpp"
#include "fedpsi/divergence.hpp"
#include "fedpsi/federation.hpp"
#include "fedpsi/parallel.hpp"
#include "fedpsi/partition.hpp"
#include "fedpsi/rng.hpp"

using namespace fedpsi;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

struct Timing {
    double serial = 0.0;
    double parallel = 0.0;
    bool identical = false;
};

template <class Fn>
Timing time_modes(Fn&& fn) {
    Timing t;
    set_execution_mode(ExecMode::Serial);
    auto start = std::chrono::steady_clock::now();
    const std::string serial_digest = fn();
    t.serial = seconds_since(start);

    set_execution_mode(ExecMode::OpenMp);
    start = std::chrono::steady_clock::now();
    const std::string parallel_digest = fn();
    t.parallel = seconds_since(start);

    t.identical = serial_digest == parallel_digest;
    return t;
}

void report(const char* name, const Timing& t) {
    std::printf("%-12s serial %8.3fs   openmp %8.3fs   speedup %5.2fx   results %s\n", name,
                t.serial, t.parallel, t.parallel > 0 ? t.serial / t.parallel : 0.0,
                t.identical ? "identical" : "DIFFER");
}

std::string bench_federation() {
    SyntheticSpec spec;
    spec.num_classes = 8;
    spec.examples_per_class = 1200;
    spec.dims = 16;
    spec.class_separation = 6.0;
    spec.noise_sigma = 1.0;
    spec.seed = 11;
    const Dataset data = generate_synthetic(spec);
    const ClientPartition part = split_train_test(
        partition_dirichlet(data, 32, 0.5, 21), data, 0.2, 22);

    TrainConfig cfg;
    cfg.rounds = 4;
    cfg.local_epochs = 3;
    cfg.learning_rate = 0.01;
    cfg.model = ModelKind::Mlp;
    cfg.hidden = 32;
    cfg.seed = 33;
    std::vector<int> pool(part.num_clients);
    std::iota(pool.begin(), pool.end(), 0);
    const FederationResult result = run_federation(data, part, pool, cfg);
    return params_checksum(result.params);
}

std::string bench_tau() {
    // PSI-like feature rows for a large federation.
    Rng rng(7);
    std::vector<PsiFeatures> features(96);
    for (int i = 0; i < 96; ++i) {
        features[i].client_id = i;
        features[i].sample_count = 100;
        features[i].psi_per_class.resize(10);
        const int blob = i % 4;
        double total = 0.0;
        for (int c = 0; c < 10; ++c) {
            const double v = 0.4 * blob + 0.05 * rng.normal();
            features[i].psi_per_class[c] = v * v;
            total += v * v;
        }
        features[i].psi_total = total;
    }
    const ClusterAssignment assignment = select_tau(features, 91);
    std::string digest = std::to_string(assignment.tau);
    for (const int label : assignment.labels) digest += "," + std::to_string(label);
    return digest;
}

std::string bench_sweep() {
    SyntheticSpec spec;
    spec.num_classes = 10;
    spec.examples_per_class = 2000;
    spec.dims = 2;
    spec.seed = 5;
    const Dataset data = generate_synthetic(spec);
    std::string digest;
    const std::vector<double> alphas = {0.05, 0.2, 0.7, 5.0, 50.0};
    std::vector<std::string> rows(alphas.size() * 4);
    parallel_for(rows.size(), [&](std::size_t unit) {
        const double alpha = alphas[unit / 4];
        const auto rep = static_cast<std::uint64_t>(unit % 4);
        const ClientPartition part = partition_dirichlet(data, 20, alpha, derive_seed(3, "p", rep));
        std::vector<LabelHistogram> hists;
        for (int c = 0; c < part.num_clients; ++c) {
            std::vector<int> labels;
            for (const std::size_t idx : part.train_indices[c]) labels.push_back(data.labels[idx]);
            hists.push_back(label_histogram(labels, data.num_classes));
        }
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.12g",
                      federation_metric(hists, FederationMetric::Wpsi, 1e-6));
        rows[unit] = buf;
    });
    for (const auto& row : rows) digest += row + ";";
    return digest;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"serial vs OpenMP benchmark"};
    int threads = 0;
    std::string scenario = "all";
    app.add_option("--threads", threads, "OpenMP thread count (0 = default)");
    app.add_option("--scenario", scenario, "federation|tau|sweep|all");
    CLI11_PARSE(app, argc, argv);

#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
    std::printf("openmp enabled, %d thread(s)\n", backend_threads());
#else
    std::printf("compiled without openmp; both modes run serially\n");
#endif

    if (scenario == "federation" || scenario == "all") {
        report("federation", time_modes(bench_federation));
    }
    if (scenario == "tau" || scenario == "all") {
        report("select_tau", time_modes(bench_tau));
    }
    if (scenario == "sweep" || scenario == "all") {
        report("sweep", time_modes(bench_sweep));
    }
    set_execution_mode(ExecMode::OpenMp);
    return 0;
}
