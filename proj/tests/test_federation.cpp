#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "fedpsi/errors.hpp"
#include "fedpsi/evaluation.hpp"
#include "fedpsi/federation.hpp"
#include "fedpsi/parallel.hpp"
#include "fedpsi/rng.hpp"
#include "oracles.hpp"

using namespace fedpsi;

namespace {

Dataset blob_dataset(int classes, int per_class, std::uint64_t seed, double separation = 6.0,
                     double sigma = 0.5) {
    SyntheticSpec spec;
    spec.num_classes = classes;
    spec.examples_per_class = per_class;
    spec.dims = 2;
    spec.class_separation = separation;
    spec.noise_sigma = sigma;
    spec.seed = seed;
    return generate_synthetic(spec);
}

ClientPartition split_partition(const Dataset& data, int k, double alpha, std::uint64_t seed) {
    return split_train_test(partition_dirichlet(data, k, alpha, seed), data, 0.2, seed + 1000);
}

ModelParameters scalar_params(double value) {
    // smallest viable shape: 1 input, 2 classes -> 4 parameters; only the
    // first coordinate is exercised by the server-update tests
    ModelParameters p;
    p.shape = {ModelKind::Linear, 1, 2, 0};
    p.values = {value, 0.0, 0.0, 0.0};
    return p;
}

TrainConfig small_config(Method method, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.rounds = 5;
    cfg.client_fraction = 0.5;
    cfg.local_epochs = 2;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.05;
    cfg.method = method;
    cfg.seed = seed;
    return cfg;
}

} // namespace

TEST_SUITE("federation") {

TEST_CASE("analytic gradients match finite differences for both shapes") {
    const Dataset data = blob_dataset(2, 3, 41, 3.0, 1.0); // 6 examples, wider D below
    Dataset wide;
    wide.dims = 3;
    wide.num_classes = 2;
    {
        Rng rng(5);
        for (int i = 0; i < 5; ++i) {
            for (int d = 0; d < 3; ++d) wide.features.push_back(rng.normal());
            wide.labels.push_back(static_cast<int>(rng.below(2)));
        }
        // make sure both classes appear
        wide.labels[0] = 0;
        wide.labels[1] = 1;
    }
    std::vector<std::size_t> batch(wide.size());
    std::iota(batch.begin(), batch.end(), std::size_t{0});

    for (const ModelKind kind : {ModelKind::Linear, ModelKind::Mlp}) {
        const ModelShape shape{kind, 3, 2, 4};
        Rng point_rng(77);
        for (int point = 0; point < 10; ++point) {
            ModelParameters params = init_params(shape, point_rng.next_u64());
            for (double& v : params.values) v += 0.3 * point_rng.normal();

            std::vector<double> analytic(params.values.size());
            batch_loss_grad(params, wide, batch, analytic);

            const auto loss_at = [&](const std::vector<double>& values) {
                ModelParameters probe = params;
                probe.values = values;
                std::vector<double> scratch(values.size());
                return batch_loss_grad(probe, wide, batch, scratch);
            };
            const std::vector<double> numeric =
                oracles::finite_difference_grad(loss_at, params.values, 1e-6);

            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < analytic.size(); ++i) {
                num += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
                den += numeric[i] * numeric[i];
            }
            CHECK(std::sqrt(num) <= 1e-4 * std::max(std::sqrt(den), 1.0));
        }
    }
    (void)data;
}

TEST_CASE("fedavg_aggregate weighted means") {
    const ModelParameters single = scalar_params(4.0);
    const auto same = fedavg_aggregate({{single, 7}});
    CHECK(same.values == single.values);

    ModelParameters w = scalar_params(2.5);
    ModelParameters neg = scalar_params(-2.5);
    for (std::size_t i = 0; i < w.values.size(); ++i) neg.values[i] = -w.values[i];
    const auto zero = fedavg_aggregate({{w, 3}, {neg, 3}});
    for (const double v : zero.values) CHECK(v == 0.0);

    const auto weighted = fedavg_aggregate({{scalar_params(4.0), 1}, {scalar_params(0.0), 3}});
    CHECK(weighted.values[0] == doctest::Approx(1.0).epsilon(1e-15));

    CHECK_THROWS_AS(fedavg_aggregate({}), EmptyFederation);
    ModelParameters other = scalar_params(1.0);
    other.shape.input_dim = 2;
    other.values.push_back(0.0);
    other.values.push_back(0.0);
    CHECK_THROWS_AS(fedavg_aggregate({{scalar_params(1.0), 1}, {other, 1}}), ShapeError);
}

TEST_CASE("aggregating identical updates returns the update exactly") {
    Rng rng(12);
    ModelParameters update;
    update.shape = {ModelKind::Mlp, 3, 4, 5};
    update.values.resize(update.shape.param_count());
    for (double& v : update.values) v = rng.normal() * 3.0;

    const auto agg = fedavg_aggregate({{update, 3}, {update, 5}, {update, 11}});
    CHECK(agg.values == update.values);
}

TEST_CASE("fedavgm server update recursion") {
    // two-step hand recursion at momentum 0.7, server_lr 1:
    // g0=1, agg=0.4 -> v=0.6, g=0.4 ; agg=0.1 -> v=0.72, g=-0.32
    ModelParameters global = scalar_params(1.0);
    ModelParameters velocity = scalar_params(0.0);
    auto [g1, v1] = fedavgm_server_update(global, scalar_params(0.4), velocity, 0.7, 1.0);
    CHECK(v1.values[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(g1.values[0] == doctest::Approx(0.4).epsilon(1e-15));
    auto [g2, v2] = fedavgm_server_update(g1, scalar_params(0.1), v1, 0.7, 1.0);
    CHECK(v2.values[0] == doctest::Approx(0.72).epsilon(1e-15));
    CHECK(g2.values[0] == doctest::Approx(-0.32).epsilon(1e-15));

    // momentum=0, server_lr=1 reduces to the aggregate bitwise
    auto [g3, v3] = fedavgm_server_update(global, scalar_params(0.4), velocity, 0.0, 1.0);
    CHECK(g3.values == scalar_params(0.4).values);

    // zero delta with zero velocity is a fixed point
    auto [g4, v4] = fedavgm_server_update(global, global, velocity, 0.9, 0.5);
    CHECK(g4.values == global.values);
    (void)v3;
    (void)v4;
}

TEST_CASE("local_train contract") {
    const Dataset data = blob_dataset(2, 40, 3);
    std::vector<std::size_t> shard(data.size());
    std::iota(shard.begin(), shard.end(), std::size_t{0});
    TrainConfig cfg = small_config(Method::FedAvg, 5);
    const ModelShape shape{cfg.model, 2, 2, 0};
    const ModelParameters start = init_params(shape, 1);

    const ModelParameters end = local_train(start, data, shard, cfg, 0, 0);
    CHECK(end.values != start.values); // start untouched, result differs
    const ModelParameters again = local_train(start, data, shard, cfg, 0, 0);
    CHECK(end.values == again.values);
    const ModelParameters other_round = local_train(start, data, shard, cfg, 0, 1);
    CHECK(end.values != other_round.values); // batch order depends on round

    CHECK_THROWS_AS(local_train(start, data, {}, cfg, 0, 0), EmptyShard);
}

TEST_CASE("fedprox with mu=0 reproduces fedavg bit for bit") {
    const Dataset data = blob_dataset(2, 40, 7);
    std::vector<std::size_t> shard(data.size());
    std::iota(shard.begin(), shard.end(), std::size_t{0});
    const ModelShape shape{ModelKind::Linear, 2, 2, 0};
    const ModelParameters start = init_params(shape, 2);

    TrainConfig avg = small_config(Method::FedAvg, 9);
    TrainConfig prox = small_config(Method::FedProx, 9);
    prox.prox_mu = 0.0;
    CHECK(local_train(start, data, shard, avg, 1, 0).values ==
          local_train(start, data, shard, prox, 1, 0).values);

    prox.prox_mu = 0.1;
    CHECK(local_train(start, data, shard, avg, 1, 0).values !=
          local_train(start, data, shard, prox, 1, 0).values);
}

TEST_CASE("baseline reductions are bitwise over whole trajectories") {
    const Dataset data = blob_dataset(3, 120, 11);
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const ClientPartition part = split_partition(data, 6, 1.0, seed);
        std::vector<int> pool(part.num_clients);
        std::iota(pool.begin(), pool.end(), 0);

        TrainConfig avg = small_config(Method::FedAvg, seed + 50);
        TrainConfig prox = small_config(Method::FedProx, seed + 50);
        prox.prox_mu = 0.0;
        TrainConfig avgm = small_config(Method::FedAvgM, seed + 50);
        avgm.server_momentum = 0.0;
        avgm.server_lr = 1.0;

        const FederationResult r_avg = run_federation(data, part, pool, avg);
        const FederationResult r_prox = run_federation(data, part, pool, prox);
        const FederationResult r_avgm = run_federation(data, part, pool, avgm);

        CHECK(r_avg.params.values == r_prox.params.values);
        CHECK(r_avg.params.values == r_avgm.params.values);
        REQUIRE(r_avg.logs.size() == r_prox.logs.size());
        REQUIRE(r_avg.logs.size() == r_avgm.logs.size());
        for (std::size_t round = 0; round < r_avg.logs.size(); ++round) {
            CHECK(r_avg.logs[round].params_checksum == r_prox.logs[round].params_checksum);
            CHECK(r_avg.logs[round].params_checksum == r_avgm.logs[round].params_checksum);
        }
    }
}

TEST_CASE("run_federation samples the documented participant count") {
    const Dataset data = blob_dataset(2, 200, 13);
    const ClientPartition part = split_partition(data, 10, 5.0, 3);
    std::vector<int> pool(part.num_clients);
    std::iota(pool.begin(), pool.end(), 0);

    TrainConfig cfg = small_config(Method::FedAvg, 21);
    cfg.rounds = 1;
    const FederationResult result = run_federation(data, part, pool, cfg);
    REQUIRE(result.logs.size() == 1);
    CHECK(result.logs[0].participants.size() == 5); // round(0.5 * 10)
    for (const int c : result.logs[0].participants) {
        CHECK(c >= 0);
        CHECK(c < 10);
    }

    // q floors at one participant
    cfg.client_fraction = 0.01;
    const FederationResult tiny = run_federation(data, part, pool, cfg);
    CHECK(tiny.logs[0].participants.size() == 1);
}

TEST_CASE("single-client federation equals centralized training on that shard") {
    const Dataset data = blob_dataset(2, 100, 17);
    ClientPartition whole;
    whole.num_clients = 1;
    whole.train_indices.resize(1);
    whole.test_indices.resize(1);
    whole.train_indices[0].resize(data.size());
    std::iota(whole.train_indices[0].begin(), whole.train_indices[0].end(), std::size_t{0});
    const ClientPartition part = split_train_test(whole, data, 0.2, 4);

    TrainConfig cfg = small_config(Method::FedAvg, 33);
    cfg.client_fraction = 1.0;
    cfg.rounds = 3;
    cfg.local_epochs = 2;
    const FederationResult fed = run_federation(data, part, std::vector<int>{0}, cfg);
    // same budget run as one client's local stream: T rounds of E epochs
    ModelParameters manual =
        init_params({cfg.model, 2, 2, cfg.hidden}, derive_seed(cfg.seed, "init"));
    for (int round = 0; round < cfg.rounds; ++round) {
        manual = local_train(manual, data, part.train_indices[0], cfg, 0, round);
    }
    CHECK(fed.params.values == manual.values);
}

TEST_CASE("near-iid federated accuracy approaches the centralized baseline") {
    const Dataset data = blob_dataset(2, 1000, 19, 6.0, 0.5);
    const ClientPartition part = split_partition(data, 10, 50.0, 5);
    std::vector<int> pool(part.num_clients);
    std::iota(pool.begin(), pool.end(), 0);

    TrainConfig cfg = small_config(Method::FedAvg, 71);
    cfg.rounds = 10;
    cfg.local_epochs = 5;
    const FederationResult fed = run_federation(data, part, pool, cfg);

    TrainConfig central = cfg;
    central.method = Method::Centralized;
    std::vector<std::size_t> train_pool;
    for (int c = 0; c < part.num_clients; ++c) {
        train_pool.insert(train_pool.end(), part.train_indices[c].begin(),
                          part.train_indices[c].end());
    }
    std::sort(train_pool.begin(), train_pool.end());
    const ModelParameters cl = centralized_baseline(data, train_pool, central);

    std::vector<const ModelParameters*> fed_models(part.num_clients, &fed.params);
    std::vector<const ModelParameters*> cl_models(part.num_clients, &cl);
    const double fed_acc = evaluate_partition(data, part, fed_models).global_accuracy;
    const double cl_acc = evaluate_partition(data, part, cl_models).global_accuracy;
    CHECK(std::fabs(fed_acc - cl_acc) <= 0.03);
    CHECK(cl_acc >= 0.95);
}

TEST_CASE("held-out centralized accuracy validates the synthetic generator") {
    SyntheticSpec spec;
    spec.num_classes = 4;
    spec.examples_per_class = 100;
    spec.dims = 2;
    spec.class_separation = 6.0;
    spec.noise_sigma = 0.5;
    spec.seed = 3;
    const Dataset data = generate_synthetic(spec);

    ClientPartition whole;
    whole.num_clients = 1;
    whole.train_indices.resize(1);
    whole.test_indices.resize(1);
    whole.train_indices[0].resize(data.size());
    std::iota(whole.train_indices[0].begin(), whole.train_indices[0].end(), std::size_t{0});
    const ClientPartition part = split_train_test(whole, data, 0.2, 6);

    TrainConfig cfg = small_config(Method::Centralized, 8);
    cfg.rounds = 10;
    const ModelParameters params = centralized_baseline(data, part.train_indices[0], cfg);
    CHECK(local_accuracy(params, data, part.test_indices[0]) >= 0.95);
}

TEST_CASE("clust driver requires at least three clients") {
    const Dataset data = blob_dataset(2, 40, 53);
    ClientPartition part;
    part.num_clients = 2;
    part.train_indices = {{}, {}};
    part.test_indices = {{}, {}};
    for (std::size_t i = 0; i < data.size(); ++i) {
        (i % 2 == 0 ? part.train_indices[0] : part.train_indices[1]).push_back(i);
    }
    const ClientPartition split = split_train_test(part, data, 0.2, 3);
    CHECK_THROWS_AS(run_clust_psi_pfl(data, split, small_config(Method::FedAvg, 1), 1e-6, 2),
                    RangeError);
}

TEST_CASE("centralized baseline is deterministic and validates the method") {
    const Dataset data = blob_dataset(3, 60, 23);
    TrainConfig cfg = small_config(Method::Centralized, 3);
    cfg.rounds = 2;
    const ModelParameters a = centralized_baseline(data, cfg);
    const ModelParameters b = centralized_baseline(data, cfg);
    CHECK(a.values == b.values);

    cfg.method = Method::FedAvg;
    CHECK_THROWS_AS(centralized_baseline(data, cfg), SpecError);
}

TEST_CASE("zero-noise blobs train to perfect accuracy") {
    const Dataset data = blob_dataset(3, 50, 29, 6.0, 0.0);
    TrainConfig cfg = small_config(Method::Centralized, 13);
    cfg.rounds = 10;
    const ModelParameters params = centralized_baseline(data, cfg);
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    CHECK(local_accuracy(params, data, all) == 1.0);
}

TEST_CASE("clust driver: S=0 clusters are single-label and near-perfect") {
    const Dataset data = blob_dataset(3, 800, 31, 6.0, 0.5);
    const ClientPartition part = split_train_test(
        partition_similarity(data, 12, 0.0, 7), data, 0.2, 8);

    TrainConfig cfg = small_config(Method::FedAvg, 99);
    cfg.rounds = 8;
    const ClustPsiResult result = run_clust_psi_pfl(data, part, cfg, 1e-6, 15);
    CHECK(result.assignment.tau == 3);

    // each cluster holds the clients of exactly one label
    for (int cluster = 0; cluster < 3; ++cluster) {
        std::set<int> labels;
        for (int client = 0; client < part.num_clients; ++client) {
            if (result.assignment.labels[client] != cluster) continue;
            for (const std::size_t idx : part.train_indices[client]) {
                labels.insert(data.labels[idx]);
            }
        }
        CHECK(labels.size() == 1);
    }

    std::vector<const ModelParameters*> models(part.num_clients);
    for (int client = 0; client < part.num_clients; ++client) {
        models[client] = &result.cluster_models[result.assignment.labels[client]].second;
    }
    const AccuracyReport report = evaluate_partition(data, part, models);
    CHECK(report.global_accuracy >= 0.95);
}

TEST_CASE("clust driver cluster isolation: per-cluster lineage reproduces standalone") {
    const Dataset data = blob_dataset(3, 400, 37);
    const ClientPartition part = split_train_test(
        partition_similarity(data, 9, 0.0, 17), data, 0.2, 18);
    TrainConfig cfg = small_config(Method::FedAvg, 41);
    cfg.rounds = 4;
    const ClustPsiResult clustered = run_clust_psi_pfl(data, part, cfg, 1e-6, 5);

    for (const auto& [cluster, params] : clustered.cluster_models) {
        std::vector<int> members;
        for (int client = 0; client < part.num_clients; ++client) {
            if (clustered.assignment.labels[client] == cluster) members.push_back(client);
        }
        const FederationResult standalone = run_federation(data, part, members, cfg, cluster);
        CHECK(standalone.params.values == params.values);
        // checksum lineage matches round by round
        std::size_t matched = 0;
        for (const RoundLog& log : clustered.logs) {
            if (log.cluster != cluster) continue;
            CHECK(log.params_checksum == standalone.logs[log.round].params_checksum);
            ++matched;
        }
        CHECK(matched == static_cast<std::size_t>(cfg.rounds));
    }
}

TEST_CASE("federation runs identically under serial and openmp execution") {
    const Dataset data = blob_dataset(4, 250, 43);
    const ClientPartition part = split_partition(data, 8, 0.5, 9);
    std::vector<int> pool(part.num_clients);
    std::iota(pool.begin(), pool.end(), 0);
    TrainConfig cfg = small_config(Method::FedAvgM, 61);
    cfg.server_momentum = 0.7;

    set_execution_mode(ExecMode::Serial);
    const FederationResult serial = run_federation(data, part, pool, cfg);
    set_execution_mode(ExecMode::OpenMp);
    const FederationResult parallel = run_federation(data, part, pool, cfg);

    CHECK(serial.params.values == parallel.params.values);
    REQUIRE(serial.logs.size() == parallel.logs.size());
    for (std::size_t i = 0; i < serial.logs.size(); ++i) {
        CHECK(serial.logs[i].params_checksum == parallel.logs[i].params_checksum);
        CHECK(serial.logs[i].participants == parallel.logs[i].participants);
        CHECK(serial.logs[i].global_accuracy == parallel.logs[i].global_accuracy);
    }
}

TEST_CASE("checkpoint round-trip") {
    Rng rng(3);
    ModelParameters params;
    params.shape = {ModelKind::Mlp, 4, 3, 8};
    params.values.resize(params.shape.param_count());
    for (double& v : params.values) v = rng.normal();

    const auto prefix =
        (std::filesystem::temp_directory_path() / "fedpsi_ckpt").string();
    save_checkpoint(params, prefix);
    const ModelParameters back = load_checkpoint(prefix);
    CHECK(back.shape == params.shape);
    CHECK(back.values == params.values);
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    cfg.rounds = 0;
    CHECK_THROWS_AS(cfg.validate(), SpecError);
    cfg.rounds = 1;
    cfg.client_fraction = 0.0;
    CHECK_THROWS_AS(cfg.validate(), SpecError);
    cfg.client_fraction = 1.5;
    CHECK_THROWS_AS(cfg.validate(), SpecError);
    cfg.client_fraction = 0.5;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), SpecError);
    cfg.batch_size = 1;
    cfg.server_momentum = 1.0;
    CHECK_THROWS_AS(cfg.validate(), SpecError);
    cfg.server_momentum = 0.0;
    cfg.validate();
}

} // TEST_SUITE
