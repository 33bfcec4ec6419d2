#include "fedpsi/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "fedpsi/clustering.hpp"
#include "fedpsi/divergence.hpp"
#include "fedpsi/errors.hpp"
#include "fedpsi/evaluation.hpp"
#include "fedpsi/parallel.hpp"
#include "fedpsi/rng.hpp"

namespace fedpsi {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

// Temp-file-then-rename so parallel invocations never observe partial output.
void write_file_atomic(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IngestError("cannot write '" + tmp.string() + "'");
        out << content;
        if (!out) throw IngestError("write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

constexpr const char* kSeedDerivationNote =
    "sub-seeds are derive_seed(master, role, cell_index, repetition): "
    "FNV-1a(64) over the master seed, the role string, and the indices, "
    "finished with the SplitMix64 mixer; cell_index enumerates grid x k_list "
    "row-major";

Method method_from_name(const std::string& name) {
    if (name == "fedavg") return Method::FedAvg;
    if (name == "fedprox") return Method::FedProx;
    if (name == "fedavgm") return Method::FedAvgM;
    if (name == "centralized") return Method::Centralized;
    if (name == "clust_psi_pfl") return Method::FedAvg; // per-cluster federations run FedAvg
    throw ConfigError("unknown method '" + name + "'");
}

json config_to_json(const ExperimentConfig& c) {
    json doc;
    if (c.synthetic) {
        doc["dataset"] = {{"type", "synthetic"},
                          {"num_classes", c.synthetic_spec.num_classes},
                          {"examples_per_class", c.synthetic_spec.examples_per_class},
                          {"dims", c.synthetic_spec.dims},
                          {"class_separation", c.synthetic_spec.class_separation},
                          {"noise_sigma", c.synthetic_spec.noise_sigma},
                          {"seed", c.synthetic_spec.seed}};
    } else {
        doc["dataset"] = {{"type", "csv"}, {"path", c.csv_path},
                          {"label_column", c.label_column}};
    }
    doc["protocol"] = protocol_name(c.protocol);
    doc["grid"] = c.grid;
    doc["k_list"] = c.k_list;
    doc["methods"] = c.methods;
    doc["train"] = {{"rounds", c.train.rounds},
                    {"client_fraction", c.train.client_fraction},
                    {"local_epochs", c.train.local_epochs},
                    {"batch_size", c.train.batch_size},
                    {"learning_rate", c.train.learning_rate},
                    {"model", c.train.model == ModelKind::Linear ? "linear" : "mlp"},
                    {"hidden", c.train.hidden},
                    {"mu", c.train.prox_mu},
                    {"momentum", c.train.server_momentum},
                    {"server_lr", c.train.server_lr}};
    doc["num_seeds"] = c.num_seeds;
    doc["epsilon"] = c.epsilon;
    doc["test_fraction"] = c.test_fraction;
    doc["min_per_client"] = c.min_per_client;
    doc["seed"] = c.master_seed;
    doc["output_dir"] = c.output_dir;
    doc["jobs"] = c.jobs;
    return doc;
}

} // namespace

void ExperimentConfig::validate() const {
    if (grid.empty()) throw ConfigError("config: empty protocol grid");
    if (k_list.empty()) throw ConfigError("config: empty k_list");
    for (const int k : k_list) {
        if (k < 2) throw ConfigError("config: k must be >= 2");
    }
    if (num_seeds < 1) throw ConfigError("config: num_seeds must be >= 1");
    if (!(epsilon > 0.0)) throw ConfigError("config: epsilon must be > 0");
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw ConfigError("config: test_fraction must be in (0,1)");
    if (jobs < 1) throw ConfigError("config: jobs must be >= 1");
    if (output_dir.empty()) throw ConfigError("config: output_dir is required");
    for (const std::string& m : methods) method_from_name(m);
    if (protocol == Protocol::Dirichlet) {
        for (const double a : grid) {
            if (!(a > 0.0)) throw ConfigError("config: dirichlet alpha must be > 0");
        }
    } else {
        for (const double s : grid) {
            if (!(s >= 0.0 && s <= 1.0)) throw ConfigError("config: similarity s must be in [0,1]");
        }
    }
    try {
        train.validate();
    } catch (const SpecError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    ExperimentConfig c;
    try {
        const json& ds = doc.at("dataset");
        const std::string type = ds.at("type").get<std::string>();
        if (type == "synthetic") {
            c.synthetic = true;
            c.synthetic_spec.num_classes = ds.at("num_classes").get<int>();
            c.synthetic_spec.examples_per_class = ds.at("examples_per_class").get<int>();
            c.synthetic_spec.dims = ds.value("dims", 2);
            c.synthetic_spec.class_separation = ds.value("class_separation", 4.0);
            c.synthetic_spec.noise_sigma = ds.value("noise_sigma", 0.5);
            c.synthetic_spec.seed = ds.value("seed", std::uint64_t{0});
        } else if (type == "csv") {
            c.synthetic = false;
            c.csv_path = ds.at("path").get<std::string>();
            c.label_column = ds.value("label_column", std::string("label"));
        } else {
            throw ConfigError("config: dataset.type must be 'synthetic' or 'csv'");
        }

        const std::string proto = doc.at("protocol").get<std::string>();
        if (proto == "dirichlet") {
            c.protocol = Protocol::Dirichlet;
        } else if (proto == "similarity") {
            c.protocol = Protocol::Similarity;
        } else {
            throw ConfigError("config: protocol must be 'dirichlet' or 'similarity'");
        }
        c.grid = doc.at("grid").get<std::vector<double>>();
        c.k_list = doc.at("k_list").get<std::vector<int>>();
        c.methods = doc.value("methods", std::vector<std::string>{"fedavg"});

        if (doc.contains("train")) {
            const json& t = doc["train"];
            c.train.rounds = t.value("rounds", 40);
            c.train.client_fraction = t.value("client_fraction", 0.5);
            c.train.local_epochs = t.value("local_epochs", 5);
            c.train.batch_size = t.value("batch_size", 32);
            c.train.learning_rate = t.value("learning_rate", 0.05);
            const std::string model = t.value("model", std::string("linear"));
            if (model == "linear") {
                c.train.model = ModelKind::Linear;
            } else if (model == "mlp") {
                c.train.model = ModelKind::Mlp;
            } else {
                throw ConfigError("config: train.model must be 'linear' or 'mlp'");
            }
            c.train.hidden = t.value("hidden", 32);
            c.train.prox_mu = t.value("mu", 0.01);
            c.train.server_momentum = t.value("momentum", 0.7);
            c.train.server_lr = t.value("server_lr", 1.0);
        }
        c.num_seeds = doc.value("num_seeds", 1);
        c.epsilon = doc.value("epsilon", 1e-6);
        c.test_fraction = doc.value("test_fraction", 0.2);
        c.min_per_client = doc.value("min_per_client", 2);
        c.master_seed = doc.value("seed", std::uint64_t{0});
        c.output_dir = doc.value("output_dir", std::string("out"));
        c.jobs = doc.value("jobs", 1);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json_text(buf.str());
}

Dataset ExperimentConfig::load_dataset() const {
    return synthetic ? generate_synthetic(synthetic_spec) : load_csv(csv_path, label_column);
}

namespace {

struct Cell {
    std::size_t index = 0;
    double parameter = 0.0;
    int k = 0;
};

std::vector<Cell> enumerate_cells(const ExperimentConfig& config) {
    std::vector<Cell> cells;
    std::size_t index = 0;
    for (const double parameter : config.grid) {
        for (const int k : config.k_list) {
            cells.push_back({index++, parameter, k});
        }
    }
    return cells;
}

std::string cell_run_id(const ExperimentConfig& config, const Cell& cell, int rep) {
    return protocol_name(config.protocol) + "-" + fmt_g(cell.parameter) + "-k" +
           std::to_string(cell.k) + "-r" + std::to_string(rep);
}

// Partition + split for one (cell, rep); empty optional means infeasible.
std::optional<ClientPartition> build_cell_partition(const ExperimentConfig& config,
                                                    const Dataset& data, const Cell& cell,
                                                    int rep) {
    const std::uint64_t pseed =
        derive_seed(config.master_seed, "partition", cell.index, static_cast<std::uint64_t>(rep));
    try {
        ClientPartition part =
            config.protocol == Protocol::Dirichlet
                ? partition_dirichlet(data, cell.k, cell.parameter, pseed, config.min_per_client)
                : partition_similarity(data, cell.k, cell.parameter, pseed,
                                       config.min_per_client);
        return split_train_test(
            part, data, config.test_fraction,
            derive_seed(config.master_seed, "split", cell.index, static_cast<std::uint64_t>(rep)));
    } catch (const InfeasiblePartition&) {
        return std::nullopt;
    }
}

} // namespace

int cmd_partition(const ExperimentConfig& config) {
    const Dataset data = config.load_dataset();
    const std::vector<Cell> cells = enumerate_cells(config);
    const fs::path out_dir = fs::path(config.output_dir) / "partitions";
    fs::create_directories(out_dir);

    json manifest;
    manifest["config"] = config_to_json(config);
    manifest["seed_derivation"] = kSeedDerivationNote;
    auto& rows = manifest["cells"] = json::array();

    for (const Cell& cell : cells) {
        for (int rep = 0; rep < config.num_seeds; ++rep) {
            const std::string name = cell_run_id(config, cell, rep) + ".json";
            json row;
            row["protocol"] = protocol_name(config.protocol);
            row["parameter"] = cell.parameter;
            row["k"] = cell.k;
            row["seed"] = rep;
            const auto part = build_cell_partition(config, data, cell, rep);
            if (part) {
                save_partition_json(*part, (out_dir / name).string());
                row["status"] = "ok";
                row["file"] = ("partitions" / fs::path(name)).string();
            } else {
                row["status"] = "infeasible";
            }
            rows.push_back(std::move(row));
        }
    }
    write_file_atomic(fs::path(config.output_dir) / "partition_manifest.json",
                      manifest.dump(2) + "\n");
    return 0;
}

int cmd_sweep(const ExperimentConfig& config) {
    const Dataset data = config.load_dataset();
    const std::vector<Cell> cells = enumerate_cells(config);
    fs::create_directories(config.output_dir);

    struct SweepRow {
        std::string text;
        std::string status;
    };
    std::vector<SweepRow> rows(cells.size() * static_cast<std::size_t>(config.num_seeds));

    const auto run_unit = [&](std::size_t unit) {
        const Cell& cell = cells[unit / config.num_seeds];
        const int rep = static_cast<int>(unit % config.num_seeds);
        // Metrics are computed over each client's full index set; the
        // train/test split plays no role in the divergence sweep.
        const std::uint64_t pseed = derive_seed(config.master_seed, "partition", cell.index,
                                                static_cast<std::uint64_t>(rep));
        ClientPartition part;
        try {
            part = config.protocol == Protocol::Dirichlet
                       ? partition_dirichlet(data, cell.k, cell.parameter, pseed,
                                             config.min_per_client)
                       : partition_similarity(data, cell.k, cell.parameter, pseed,
                                              config.min_per_client);
        } catch (const InfeasiblePartition&) {
            rows[unit].status = "infeasible";
            return;
        }
        std::vector<LabelHistogram> histograms;
        histograms.reserve(part.num_clients);
        for (int client = 0; client < part.num_clients; ++client) {
            std::vector<int> labels;
            labels.reserve(part.train_indices[client].size());
            for (const std::size_t idx : part.train_indices[client]) {
                labels.push_back(data.labels[idx]);
            }
            histograms.push_back(label_histogram(labels, data.num_classes));
        }
        std::ostringstream line;
        line << protocol_name(config.protocol) << "," << fmt_g(cell.parameter) << "," << rep
             << "," << cell.k << ","
             << fmt_g(federation_metric(histograms, FederationMetric::Wpsi, config.epsilon))
             << ","
             << fmt_g(federation_metric(histograms, FederationMetric::Hellinger, config.epsilon))
             << ","
             << fmt_g(federation_metric(histograms, FederationMetric::JensenShannon,
                                        config.epsilon))
             << ","
             << fmt_g(federation_metric(histograms, FederationMetric::Emd, config.epsilon))
             << "\n";
        rows[unit].text = line.str();
        rows[unit].status = "ok";
    };

    if (config.jobs > 1) {
        parallel_for(rows.size(), run_unit);
    } else {
        for (std::size_t unit = 0; unit < rows.size(); ++unit) run_unit(unit);
    }

    std::string csv = "protocol,parameter,seed,k,wpsi,hd,jsd,emd\n";
    for (const auto& row : rows) csv += row.text;
    write_file_atomic(fs::path(config.output_dir) / "metrics.csv", csv);

    json manifest;
    manifest["config"] = config_to_json(config);
    manifest["seed_derivation"] = kSeedDerivationNote;
    auto& mrows = manifest["cells"] = json::array();
    for (std::size_t unit = 0; unit < rows.size(); ++unit) {
        const Cell& cell = cells[unit / config.num_seeds];
        mrows.push_back({{"protocol", protocol_name(config.protocol)},
                         {"parameter", cell.parameter},
                         {"k", cell.k},
                         {"seed", static_cast<int>(unit % config.num_seeds)},
                         {"status", rows[unit].status}});
    }
    write_file_atomic(fs::path(config.output_dir) / "sweep_manifest.json",
                      manifest.dump(2) + "\n");
    return 0;
}

namespace {

struct MethodOutcome {
    std::string method;
    std::string status = "ok";
    std::string init_checksum;
    std::optional<int> tau;
    std::string summary_row;
    std::vector<std::string> local_rows;
    std::vector<std::string> round_lines;
};

struct UnitOutcome {
    std::string run_id;
    double parameter = 0.0;
    int k = 0;
    int rep = 0;
    std::vector<MethodOutcome> methods;
};

std::string summary_line(const std::string& run_id, const std::string& method,
                         const std::string& protocol, const std::string& parameter, int rep,
                         const AccuracyReport& report, const std::optional<int>& tau) {
    std::ostringstream line;
    line << run_id << "," << method << "," << protocol << "," << parameter << "," << rep << ","
         << fmt_g(report.global_accuracy) << "," << fmt_g(report.ad) << ","
         << fmt_g(report.sdad) << "," << (tau ? std::to_string(*tau) : "") << "\n";
    return line.str();
}

std::vector<std::string> local_lines(const std::string& run_id, const std::string& method,
                                     const std::string& protocol, const std::string& parameter,
                                     int rep, const AccuracyReport& report) {
    std::vector<std::string> out;
    out.reserve(report.per_client.size());
    for (const auto& entry : report.per_client) {
        std::ostringstream line;
        line << run_id << "," << method << "," << protocol << "," << parameter << "," << rep
             << "," << entry.client_id << "," << entry.n_test << "," << fmt_g(entry.accuracy)
             << "\n";
        out.push_back(line.str());
    }
    return out;
}

std::string round_json_line(const std::string& run_id, const std::string& method,
                            const RoundLog& log) {
    json doc;
    doc["run_id"] = run_id;
    doc["method"] = method;
    doc["round"] = log.round;
    doc["cluster"] = log.cluster;
    doc["participants"] = log.participants;
    doc["checksum"] = log.params_checksum;
    doc["accuracy"] = log.global_accuracy;
    if (!log.per_cluster.empty()) doc["per_cluster"] = log.per_cluster;
    return doc.dump() + "\n";
}

} // namespace

int cmd_train(const ExperimentConfig& config) {
    const Dataset data = config.load_dataset();
    const std::vector<Cell> cells = enumerate_cells(config);
    const fs::path out_dir(config.output_dir);
    const fs::path ckpt_dir = out_dir / "checkpoints";
    fs::create_directories(ckpt_dir);
    bool clustered_method = false;
    for (const std::string& m : config.methods) clustered_method |= m == "clust_psi_pfl";
    if (clustered_method) fs::create_directories(out_dir / "cluster_reports");

    std::vector<std::string> cell_methods;
    bool with_centralized = false;
    for (const std::string& m : config.methods) {
        if (m == "centralized") {
            with_centralized = true;
        } else {
            cell_methods.push_back(m);
        }
    }

    const std::string protocol = protocol_name(config.protocol);
    std::vector<UnitOutcome> units(cells.size() * static_cast<std::size_t>(config.num_seeds));

    const auto run_unit = [&](std::size_t unit) {
        const Cell& cell = cells[unit / config.num_seeds];
        const int rep = static_cast<int>(unit % config.num_seeds);
        UnitOutcome& out = units[unit];
        out.run_id = cell_run_id(config, cell, rep);
        out.parameter = cell.parameter;
        out.k = cell.k;
        out.rep = rep;

        const auto part = build_cell_partition(config, data, cell, rep);
        const std::string parameter = fmt_g(cell.parameter);

        for (const std::string& method : cell_methods) {
            MethodOutcome mo;
            mo.method = method;
            if (!part) {
                mo.status = "infeasible";
                out.methods.push_back(std::move(mo));
                continue;
            }
            TrainConfig cfg = config.train;
            cfg.method = method_from_name(method);
            cfg.seed = derive_seed(config.master_seed, "train", cell.index,
                                   static_cast<std::uint64_t>(rep));
            const ModelShape shape{cfg.model, static_cast<int>(data.dims), data.num_classes,
                                   cfg.hidden};
            mo.init_checksum = params_checksum(init_params(shape, derive_seed(cfg.seed, "init")));

            try {
                if (method == "clust_psi_pfl") {
                    const ClustPsiResult result = run_clust_psi_pfl(
                        data, *part, cfg, config.epsilon,
                        derive_seed(config.master_seed, "cluster", cell.index,
                                    static_cast<std::uint64_t>(rep)));
                    mo.tau = result.assignment.tau;
                    std::vector<const ModelParameters*> model_per_client(part->num_clients);
                    for (int client = 0; client < part->num_clients; ++client) {
                        model_per_client[client] =
                            &result.cluster_models[result.assignment.labels[client]].second;
                    }
                    const AccuracyReport report =
                        evaluate_partition(data, *part, model_per_client);
                    mo.summary_row = summary_line(out.run_id, method, protocol, parameter, rep,
                                                  report, mo.tau);
                    mo.local_rows =
                        local_lines(out.run_id, method, protocol, parameter, rep, report);
                    for (const auto& log : result.logs) {
                        mo.round_lines.push_back(round_json_line(out.run_id, method, log));
                    }
                    write_cluster_report(
                        result.assignment, result.candidates,
                        (out_dir / "cluster_reports" / (out.run_id + ".json")).string());
                    for (const auto& [cluster, params] : result.cluster_models) {
                        save_checkpoint(params, (ckpt_dir / (out.run_id + "-" + method + "-c" +
                                                             std::to_string(cluster)))
                                                    .string());
                    }
                } else {
                    std::vector<int> pool(part->num_clients);
                    std::iota(pool.begin(), pool.end(), 0);
                    const FederationResult result = run_federation(data, *part, pool, cfg);
                    std::vector<const ModelParameters*> model_per_client(part->num_clients,
                                                                         &result.params);
                    const AccuracyReport report =
                        evaluate_partition(data, *part, model_per_client);
                    mo.summary_row = summary_line(out.run_id, method, protocol, parameter, rep,
                                                  report, std::nullopt);
                    mo.local_rows =
                        local_lines(out.run_id, method, protocol, parameter, rep, report);
                    for (const auto& log : result.logs) {
                        mo.round_lines.push_back(round_json_line(out.run_id, method, log));
                    }
                    save_checkpoint(result.params,
                                    (ckpt_dir / (out.run_id + "-" + method)).string());
                }
            } catch (const DivergedError&) {
                mo.status = "diverged";
                mo.summary_row.clear();
                mo.local_rows.clear();
                mo.round_lines.clear();
            }
            out.methods.push_back(std::move(mo));
        }
    };

    if (config.jobs > 1) {
        parallel_for(units.size(), run_unit);
    } else {
        for (std::size_t unit = 0; unit < units.size(); ++unit) run_unit(unit);
    }

    // Centralized baseline: one run per repetition, grid ignored; the whole
    // dataset acts as a single pseudo-client.
    std::vector<MethodOutcome> central;
    if (with_centralized) {
        for (int rep = 0; rep < config.num_seeds; ++rep) {
            const std::string run_id = "centralized-r" + std::to_string(rep);
            MethodOutcome mo;
            mo.method = "centralized";
            ClientPartition whole;
            whole.num_clients = 1;
            whole.train_indices.resize(1);
            whole.test_indices.resize(1);
            whole.train_indices[0].resize(data.size());
            std::iota(whole.train_indices[0].begin(), whole.train_indices[0].end(),
                      std::size_t{0});
            const ClientPartition split = split_train_test(
                whole, data, config.test_fraction,
                derive_seed(config.master_seed, "central_split", static_cast<std::uint64_t>(rep)));

            TrainConfig cfg = config.train;
            cfg.method = Method::Centralized;
            cfg.seed = derive_seed(config.master_seed, "train_central",
                                   static_cast<std::uint64_t>(rep));
            const ModelShape shape{cfg.model, static_cast<int>(data.dims), data.num_classes,
                                   cfg.hidden};
            mo.init_checksum = params_checksum(init_params(shape, derive_seed(cfg.seed, "init")));
            try {
                const ModelParameters params =
                    centralized_baseline(data, split.train_indices[0], cfg);
                const AccuracyReport report = evaluate_partition(data, split, {&params});
                mo.summary_row =
                    summary_line(run_id, "centralized", "none", "", rep, report, std::nullopt);
                mo.local_rows = local_lines(run_id, "centralized", "none", "", rep, report);
                save_checkpoint(params, (ckpt_dir / (run_id + "-centralized")).string());
            } catch (const DivergedError&) {
                mo.status = "diverged";
            }
            central.push_back(std::move(mo));
        }
    }

    std::string summary = "run_id,method,protocol,parameter,seed,global_accuracy,ad,sdad,tau\n";
    std::string locals = "run_id,method,protocol,parameter,seed,client_id,n_test,accuracy\n";
    std::string rounds;
    json manifest;
    manifest["config"] = config_to_json(config);
    manifest["seed_derivation"] = kSeedDerivationNote;
    auto& mrows = manifest["cells"] = json::array();

    for (const UnitOutcome& unit : units) {
        for (const MethodOutcome& mo : unit.methods) {
            summary += mo.summary_row;
            for (const std::string& line : mo.local_rows) locals += line;
            for (const std::string& line : mo.round_lines) rounds += line;
            json row;
            row["run_id"] = unit.run_id;
            row["protocol"] = protocol;
            row["parameter"] = unit.parameter;
            row["k"] = unit.k;
            row["seed"] = unit.rep;
            row["method"] = mo.method;
            row["status"] = mo.status;
            if (!mo.init_checksum.empty()) row["init_checksum"] = mo.init_checksum;
            if (mo.tau) row["tau"] = *mo.tau;
            mrows.push_back(std::move(row));
        }
    }
    for (std::size_t rep = 0; rep < central.size(); ++rep) {
        const MethodOutcome& mo = central[rep];
        summary += mo.summary_row;
        for (const std::string& line : mo.local_rows) locals += line;
        json row;
        row["run_id"] = "centralized-r" + std::to_string(rep);
        row["protocol"] = "none";
        row["seed"] = rep;
        row["method"] = "centralized";
        row["status"] = mo.status;
        if (!mo.init_checksum.empty()) row["init_checksum"] = mo.init_checksum;
        mrows.push_back(std::move(row));
    }

    write_file_atomic(out_dir / "summary.csv", summary);
    write_file_atomic(out_dir / "local_metrics.csv", locals);
    write_file_atomic(out_dir / "rounds.jsonl", rounds);
    write_file_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
    return 0;
}

namespace {

struct SummaryRow {
    std::string run_id;
    std::string method;
    double global_accuracy = 0.0;
    double ad = 0.0;
    double sdad = 0.0;
    bool clustered = false;
};

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    for (const char ch : line) {
        if (ch == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (ch != '\r') {
            field.push_back(ch);
        }
    }
    fields.push_back(std::move(field));
    return fields;
}

struct Stats {
    double mean = 0.0;
    double sample_std = 0.0;
    std::size_t n = 0;
};

Stats stats_of(const std::vector<double>& values) {
    Stats s;
    s.n = values.size();
    if (s.n == 0) return s;
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
    if (s.n > 1) {
        double var = 0.0;
        for (const double v : values) var += (v - s.mean) * (v - s.mean);
        s.sample_std = std::sqrt(var / static_cast<double>(s.n - 1));
    }
    return s;
}

} // namespace

int cmd_compare(const std::vector<std::string>& summary_paths,
                const std::string& report_path) {
    static const std::string kHeader =
        "run_id,method,protocol,parameter,seed,global_accuracy,ad,sdad,tau";

    // cell id = run_id without the trailing repetition suffix
    std::map<std::string, std::map<std::string, std::vector<SummaryRow>>> cells;
    for (const std::string& path : summary_paths) {
        std::ifstream in(path);
        if (!in) {
            std::cerr << "compare: cannot open '" << path << "'\n";
            return 2;
        }
        std::string line;
        if (!std::getline(in, line) || split_fields(line) != split_fields(kHeader)) {
            std::cerr << "compare: schema mismatch in '" << path << "' (expected '" << kHeader
                      << "')\n";
            return 2;
        }
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const std::vector<std::string> f = split_fields(line);
            if (f.size() != 9) {
                std::cerr << "compare: malformed row in '" << path << "': " << line << "\n";
                return 2;
            }
            SummaryRow row;
            row.run_id = f[0];
            row.method = f[1];
            row.global_accuracy = std::stod(f[5]);
            row.ad = std::stod(f[6]);
            row.sdad = std::stod(f[7]);
            row.clustered = !f[8].empty();
            std::string cell = row.run_id;
            const std::size_t pos = cell.rfind("-r");
            if (pos != std::string::npos) cell.resize(pos);
            cells[cell][row.method].push_back(std::move(row));
        }
    }

    json report;
    report["std_kind"] = "sample";
    report["empty"] = cells.empty();
    auto& out_cells = report["cells"] = json::array();
    for (const auto& [cell, by_method] : cells) {
        json entry;
        entry["cell"] = cell;
        auto& methods = entry["methods"] = json::array();
        double best_clustered_ad = std::numeric_limits<double>::infinity();
        double best_plain_ad = std::numeric_limits<double>::infinity();
        for (const auto& [method, rows] : by_method) {
            std::vector<double> acc, ad, sdad;
            bool clustered = false;
            for (const SummaryRow& row : rows) {
                acc.push_back(row.global_accuracy);
                ad.push_back(row.ad);
                sdad.push_back(row.sdad);
                clustered = clustered || row.clustered;
            }
            const Stats acc_s = stats_of(acc);
            const Stats ad_s = stats_of(ad);
            const Stats sdad_s = stats_of(sdad);
            methods.push_back({{"method", method},
                               {"n", acc_s.n},
                               {"accuracy_mean", acc_s.mean},
                               {"accuracy_std", acc_s.sample_std},
                               {"ad_mean", ad_s.mean},
                               {"ad_std", ad_s.sample_std},
                               {"sdad_mean", sdad_s.mean},
                               {"sdad_std", sdad_s.sample_std},
                               {"clustered", clustered}});
            if (clustered) {
                best_clustered_ad = std::min(best_clustered_ad, ad_s.mean);
            } else {
                best_plain_ad = std::min(best_plain_ad, ad_s.mean);
            }
        }
        if (std::isfinite(best_clustered_ad) && std::isfinite(best_plain_ad) &&
            best_plain_ad > 0.0) {
            entry["ad_relative_reduction_pct"] =
                (best_plain_ad - best_clustered_ad) / best_plain_ad * 100.0;
        } else if (std::isfinite(best_clustered_ad) && std::isfinite(best_plain_ad)) {
            entry["ad_relative_reduction_pct"] = 0.0;
        }
        out_cells.push_back(std::move(entry));
    }

    const fs::path path(report_path);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_file_atomic(path, report.dump(2) + "\n");
    return 0;
}

} // namespace fedpsi
