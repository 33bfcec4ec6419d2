#include "fedpsi/partition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include <json.hpp>

#include "fedpsi/errors.hpp"
#include "fedpsi/rng.hpp"

namespace fedpsi {

std::string protocol_name(Protocol p) {
    return p == Protocol::Dirichlet ? "dirichlet" : "similarity";
}

void ClientPartition::validate(std::size_t dataset_size, bool require_split) const {
    if (num_clients < 1) throw SpecError("partition: num_clients must be >= 1");
    if (train_indices.size() != static_cast<std::size_t>(num_clients) ||
        test_indices.size() != static_cast<std::size_t>(num_clients))
        throw SpecError("partition: index lists do not match num_clients");
    std::unordered_set<std::size_t> seen;
    for (int i = 0; i < num_clients; ++i) {
        if (require_split && (train_indices[i].empty() || test_indices[i].empty()))
            throw SpecError("partition: client " + std::to_string(i) +
                            " lacks a non-empty train/test side");
        for (const auto* list : {&train_indices[i], &test_indices[i]}) {
            for (const std::size_t idx : *list) {
                if (idx >= dataset_size)
                    throw SpecError("partition: index " + std::to_string(idx) +
                                    " out of dataset bounds");
                if (!seen.insert(idx).second)
                    throw SpecError("partition: index " + std::to_string(idx) +
                                    " assigned twice");
            }
        }
    }
}

LabelHistogram ClientPartition::train_histogram(const Dataset& data, int client) const {
    LabelHistogram counts(data.num_classes, 0);
    for (const std::size_t idx : train_indices[client]) ++counts[data.labels[idx]];
    return counts;
}

namespace {

ClientPartition make_partition(Protocol protocol, double parameter, std::uint64_t seed,
                               std::vector<std::vector<std::size_t>> assigned) {
    ClientPartition part;
    part.num_clients = static_cast<int>(assigned.size());
    part.protocol = protocol;
    part.parameter = parameter;
    part.seed = seed;
    for (auto& list : assigned) std::sort(list.begin(), list.end());
    part.train_indices = std::move(assigned);
    part.test_indices.assign(part.num_clients, {});
    return part;
}

bool feasible(const std::vector<std::vector<std::size_t>>& assigned, std::size_t floor) {
    return std::all_of(assigned.begin(), assigned.end(),
                       [floor](const auto& list) { return list.size() >= floor; });
}

} // namespace

ClientPartition partition_dirichlet(const Dataset& data, int k, double alpha,
                                    std::uint64_t seed, int min_per_client,
                                    int max_attempts) {
    if (k < 2) throw RangeError("dirichlet: k must be >= 2");
    if (!(alpha > 0.0)) throw RangeError("dirichlet: alpha must be > 0");
    data.validate();

    // Example indices per class, ascending.
    std::vector<std::vector<std::size_t>> by_class(data.num_classes);
    for (std::size_t i = 0; i < data.size(); ++i) by_class[data.labels[i]].push_back(i);

    const std::size_t floor = static_cast<std::size_t>(std::max(2, min_per_client));
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        Rng rng(derive_seed(seed, "dirichlet", static_cast<std::uint64_t>(attempt)));
        std::vector<std::vector<std::size_t>> assigned(k);
        bool degenerate = false;
        std::vector<double> cumulative(k);
        for (int c = 0; c < data.num_classes && !degenerate; ++c) {
            double total = 0.0;
            for (int i = 0; i < k; ++i) {
                total += rng.gamma(alpha);
                cumulative[i] = total;
            }
            if (!(total > 0.0)) {
                degenerate = true; // all gamma draws underflowed
                break;
            }
            for (const std::size_t idx : by_class[c]) {
                const double u = rng.uniform01() * total;
                const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
                const int client = std::min<int>(
                    static_cast<int>(it - cumulative.begin()), k - 1);
                assigned[client].push_back(idx);
            }
        }
        if (!degenerate && feasible(assigned, floor)) {
            return make_partition(Protocol::Dirichlet, alpha, seed, std::move(assigned));
        }
    }
    throw InfeasiblePartition("dirichlet: no feasible partition for alpha=" +
                              std::to_string(alpha) + ", k=" + std::to_string(k) +
                              " within " + std::to_string(max_attempts) + " attempts");
}

ClientPartition partition_similarity(const Dataset& data, int k, double s,
                                     std::uint64_t seed, int min_per_client) {
    if (k < 2) throw RangeError("similarity: k must be >= 2");
    if (!(s >= 0.0 && s <= 1.0)) throw RangeError("similarity: s must be in [0,1]");
    data.validate();

    const std::size_t n = data.size();
    Rng rng(derive_seed(seed, "similarity"));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm.begin(), perm.end());

    // IID component: floor(s*N), rounded toward zero.
    const std::size_t n_iid = static_cast<std::size_t>(s * static_cast<double>(n));
    std::vector<std::vector<std::size_t>> assigned(k);
    for (std::size_t j = 0; j < n_iid; ++j) assigned[j % k].push_back(perm[j]);

    // Label-skewed component: sorted by (label, index) and cut into K
    // contiguous shards handed to clients 0..K-1.
    std::vector<std::size_t> rest(perm.begin() + static_cast<std::ptrdiff_t>(n_iid),
                                  perm.end());
    std::sort(rest.begin(), rest.end(), [&data](std::size_t a, std::size_t b) {
        return data.labels[a] != data.labels[b] ? data.labels[a] < data.labels[b] : a < b;
    });
    const std::size_t r = rest.size();
    for (int i = 0; i < k; ++i) {
        const std::size_t lo = r * static_cast<std::size_t>(i) / static_cast<std::size_t>(k);
        const std::size_t hi = r * static_cast<std::size_t>(i + 1) / static_cast<std::size_t>(k);
        assigned[i].insert(assigned[i].end(), rest.begin() + static_cast<std::ptrdiff_t>(lo),
                           rest.begin() + static_cast<std::ptrdiff_t>(hi));
    }

    const std::size_t floor = static_cast<std::size_t>(std::max(2, min_per_client));
    if (!feasible(assigned, floor)) {
        throw InfeasiblePartition("similarity: client below the per-client minimum for s=" +
                                  std::to_string(s) + ", k=" + std::to_string(k) +
                                  ", n=" + std::to_string(n));
    }
    return make_partition(Protocol::Similarity, s, seed, std::move(assigned));
}

ClientPartition split_train_test(const ClientPartition& part, const Dataset& data,
                                 double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw RangeError("split: test_fraction must be in (0,1)");

    ClientPartition out = part;
    for (int client = 0; client < part.num_clients; ++client) {
        std::vector<std::size_t> all = part.train_indices[client];
        all.insert(all.end(), part.test_indices[client].begin(),
                   part.test_indices[client].end());
        std::sort(all.begin(), all.end());
        if (all.size() < 2)
            throw InfeasiblePartition("split: client " + std::to_string(client) +
                                      " has fewer than 2 examples");

        Rng rng(derive_seed(seed, "split", static_cast<std::uint64_t>(client)));
        std::vector<std::vector<std::size_t>> groups(data.num_classes);
        for (const std::size_t idx : all) groups[data.labels[idx]].push_back(idx);

        std::vector<std::size_t> train, test;
        bool any_multi = false;
        for (auto& group : groups) {
            if (group.size() >= 2) any_multi = true;
        }
        if (any_multi) {
            for (auto& group : groups) {
                if (group.empty()) continue;
                if (group.size() == 1) {
                    train.push_back(group[0]);
                    continue;
                }
                const std::size_t want = static_cast<std::size_t>(
                    std::ceil(test_fraction * static_cast<double>(group.size())));
                const std::size_t take = std::min(want, group.size() - 1);
                rng.shuffle(group.begin(), group.end());
                test.insert(test.end(), group.begin(),
                            group.begin() + static_cast<std::ptrdiff_t>(take));
                train.insert(train.end(), group.begin() + static_cast<std::ptrdiff_t>(take),
                             group.end());
            }
        } else {
            // Every class is a singleton here; stratification cannot apply.
            const std::size_t want = static_cast<std::size_t>(
                std::ceil(test_fraction * static_cast<double>(all.size())));
            const std::size_t take = std::clamp<std::size_t>(want, 1, all.size() - 1);
            rng.shuffle(all.begin(), all.end());
            test.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take));
            train.assign(all.begin() + static_cast<std::ptrdiff_t>(take), all.end());
        }
        std::sort(train.begin(), train.end());
        std::sort(test.begin(), test.end());
        out.train_indices[client] = std::move(train);
        out.test_indices[client] = std::move(test);
    }
    out.validate(data.size(), /*require_split=*/true);
    return out;
}

void save_partition_json(const ClientPartition& part, const std::string& path) {
    nlohmann::json doc;
    doc["num_clients"] = part.num_clients;
    doc["protocol"] = protocol_name(part.protocol);
    doc["parameter"] = part.parameter;
    doc["seed"] = part.seed;
    auto& clients = doc["clients"] = nlohmann::json::array();
    for (int i = 0; i < part.num_clients; ++i) {
        nlohmann::json entry;
        entry["id"] = i;
        entry["train"] = part.train_indices[i];
        entry["test"] = part.test_indices[i];
        clients.push_back(std::move(entry));
    }
    std::ofstream out(path);
    if (!out) throw IngestError("partition: cannot write '" + path + "'");
    out << doc.dump(2) << "\n";
    if (!out) throw IngestError("partition: write failed for '" + path + "'");
}

ClientPartition load_partition_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("partition: cannot open '" + path + "'");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw IngestError("partition: invalid JSON in '" + path + "': " + e.what());
    }
    try {
        ClientPartition part;
        part.num_clients = doc.at("num_clients").get<int>();
        const std::string proto = doc.at("protocol").get<std::string>();
        if (proto == "dirichlet") {
            part.protocol = Protocol::Dirichlet;
        } else if (proto == "similarity") {
            part.protocol = Protocol::Similarity;
        } else {
            throw IngestError("partition: unknown protocol '" + proto + "'");
        }
        part.parameter = doc.at("parameter").get<double>();
        part.seed = doc.at("seed").get<std::uint64_t>();
        part.train_indices.resize(part.num_clients);
        part.test_indices.resize(part.num_clients);
        for (const auto& entry : doc.at("clients")) {
            const int id = entry.at("id").get<int>();
            if (id < 0 || id >= part.num_clients)
                throw IngestError("partition: client id out of range in '" + path + "'");
            part.train_indices[id] = entry.at("train").get<std::vector<std::size_t>>();
            part.test_indices[id] = entry.at("test").get<std::vector<std::size_t>>();
        }
        return part;
    } catch (const nlohmann::json::exception& e) {
        throw IngestError("partition: schema error in '" + path + "': " + e.what());
    }
}

} // namespace fedpsi
