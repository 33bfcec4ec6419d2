#include "fedpsi/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "fedpsi/errors.hpp"
#include "fedpsi/parallel.hpp"
#include "fedpsi/rng.hpp"

namespace fedpsi {

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t d = 0; d < a.size(); ++d) {
        const double diff = a[d] - b[d];
        acc += diff * diff;
    }
    return acc;
}

int nearest_center(const FeatureMatrix& x, std::size_t point,
                   const std::vector<std::vector<double>>& centers) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centers.size(); ++c) {
        const double d = sq_dist(x.row(point), centers[c]);
        if (d < best_d) { // ties keep the lower center index
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    return best;
}

struct KmeansRun {
    std::vector<int> labels;
    std::vector<std::vector<double>> centers;
    double sse = std::numeric_limits<double>::infinity();
};

KmeansRun run_lloyd(const FeatureMatrix& x, int j, std::uint64_t seed, int max_iters) {
    const std::size_t n = x.rows;
    Rng rng(seed);

    // K-means++ seeding: first center uniform, then proportional to the
    // squared distance to the nearest chosen center. dist2 is maintained
    // incrementally against the most recent center.
    std::vector<std::vector<double>> centers;
    centers.reserve(j);
    const std::size_t first = rng.below(n);
    centers.emplace_back(x.row(first).begin(), x.row(first).end());
    std::vector<double> dist2(n);
    for (std::size_t i = 0; i < n; ++i) dist2[i] = sq_dist(x.row(i), centers[0]);
    for (int c = 1; c < j; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += dist2[i];
        std::size_t pick;
        if (total > 0.0) {
            const double u = rng.uniform01() * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += dist2[i];
                if (u < acc) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.below(n); // all points coincide with a chosen center
        }
        centers.emplace_back(x.row(pick).begin(), x.row(pick).end());
        for (std::size_t i = 0; i < n; ++i) {
            dist2[i] = std::min(dist2[i], sq_dist(x.row(i), centers.back()));
        }
    }

    std::vector<int> labels(n, 0);
    std::vector<std::size_t> counts(j, 0);
    for (int iter = 0; iter < max_iters; ++iter) {
        for (std::size_t i = 0; i < n; ++i) labels[i] = nearest_center(x, i, centers);

        std::vector<std::vector<double>> next(j, std::vector<double>(x.cols, 0.0));
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto r = x.row(i);
            auto& acc = next[labels[i]];
            for (std::size_t d = 0; d < x.cols; ++d) acc[d] += r[d];
            ++counts[labels[i]];
        }
        for (int c = 0; c < j; ++c) {
            if (counts[c] == 0) continue;
            for (std::size_t d = 0; d < x.cols; ++d) {
                next[c][d] /= static_cast<double>(counts[c]);
            }
        }

        // Empty-cluster repair: move the point farthest from its current
        // centroid (ties keep the smallest index), skipping points that are
        // the sole member of their cluster.
        for (int c = 0; c < j; ++c) {
            if (counts[c] != 0) continue;
            std::size_t farthest = n;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[labels[i]] < 2) continue;
                const double d = sq_dist(x.row(i), next[labels[i]]);
                if (d > far_d) {
                    far_d = d;
                    farthest = i;
                }
            }
            if (farthest == n) break; // degenerate: fewer distinct points than clusters
            --counts[labels[farthest]];
            const int old = labels[farthest];
            for (std::size_t d = 0; d < x.cols; ++d) {
                const double removed = x.row(farthest)[d];
                const double m = static_cast<double>(counts[old]);
                next[old][d] = (next[old][d] * (m + 1.0) - removed) / m;
            }
            labels[farthest] = c;
            counts[c] = 1;
            next[c].assign(x.row(farthest).begin(), x.row(farthest).end());
        }

        double max_shift = 0.0;
        for (int c = 0; c < j; ++c) {
            max_shift = std::max(max_shift, sq_dist(centers[c], next[c]));
        }
        centers = std::move(next);
        if (std::sqrt(max_shift) < 1e-8) break;
    }
    for (std::size_t i = 0; i < n; ++i) labels[i] = nearest_center(x, i, centers);

    KmeansRun run;
    run.sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) run.sse += sq_dist(x.row(i), centers[labels[i]]);
    run.labels = std::move(labels);
    run.centers = std::move(centers);
    return run;
}

// Remaps cluster ids to first-appearance order and guarantees surjectivity
// onto [0, j).
bool canonicalize(KmeansRun& run, int j) {
    std::vector<int> remap(j, -1);
    int next_id = 0;
    for (int& label : run.labels) {
        if (remap[label] < 0) remap[label] = next_id++;
    }
    if (next_id != j) return false;
    std::vector<std::vector<double>> centers(j);
    for (int c = 0; c < j; ++c) centers[remap[c]] = std::move(run.centers[c]);
    run.centers = std::move(centers);
    for (int& label : run.labels) label = remap[label];
    return true;
}

} // namespace

FeatureMatrix build_features(const std::vector<PsiFeatures>& features) {
    if (features.empty()) throw EmptyFederation("build_features: no clients");
    const std::size_t num_classes = features[0].psi_per_class.size();
    for (const auto& f : features) {
        if (f.psi_per_class.size() != num_classes)
            throw ShapeError("build_features: inconsistent class count across clients");
    }
    std::vector<const PsiFeatures*> ordered;
    ordered.reserve(features.size());
    for (const auto& f : features) ordered.push_back(&f);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const PsiFeatures* a, const PsiFeatures* b) {
                         return a->client_id < b->client_id;
                     });

    FeatureMatrix x;
    x.rows = features.size();
    x.cols = num_classes + 1;
    x.values.reserve(x.rows * x.cols);
    for (const PsiFeatures* f : ordered) {
        x.values.push_back(f->psi_total);
        x.values.insert(x.values.end(), f->psi_per_class.begin(), f->psi_per_class.end());
    }
    return x;
}

FeatureMatrix standardize(const FeatureMatrix& x) {
    if (x.rows < 2) throw RangeError("standardize: need at least 2 rows");
    FeatureMatrix out = x;
    out.means.assign(x.cols, 0.0);
    out.stds.assign(x.cols, 0.0);
    for (std::size_t d = 0; d < x.cols; ++d) {
        double mean = 0.0;
        for (std::size_t i = 0; i < x.rows; ++i) mean += x.values[i * x.cols + d];
        mean /= static_cast<double>(x.rows);
        double var = 0.0;
        for (std::size_t i = 0; i < x.rows; ++i) {
            const double diff = x.values[i * x.cols + d] - mean;
            var += diff * diff;
        }
        const double std_dev = std::sqrt(var / static_cast<double>(x.rows));
        out.means[d] = mean;
        out.stds[d] = std_dev;
        for (std::size_t i = 0; i < x.rows; ++i) {
            double& v = out.values[i * x.cols + d];
            v = std_dev > 1e-12 ? (x.values[i * x.cols + d] - mean) / std_dev : 0.0;
        }
    }
    out.standardized = true;
    return out;
}

ClusterAssignment kmeans_pp(const FeatureMatrix& x, int j, std::uint64_t seed,
                            int max_iters, int restarts) {
    const int k = static_cast<int>(x.rows);
    if (j < 2 || j > k - 1)
        throw RangeError("kmeans: j=" + std::to_string(j) + " outside [2, " +
                         std::to_string(k - 1) + "]");

    std::vector<KmeansRun> runs(restarts);
    parallel_for(static_cast<std::size_t>(restarts), [&](std::size_t r) {
        runs[r] = run_lloyd(x, j, derive_seed(seed, "kmeans_restart", r), max_iters);
    });

    const KmeansRun* best = nullptr;
    for (auto& run : runs) {
        if (!canonicalize(run, j)) continue;
        if (best == nullptr || run.sse < best->sse) best = &run;
    }
    if (best == nullptr)
        throw RangeError("kmeans: fewer than j distinct points; no valid clustering");

    ClusterAssignment out;
    out.tau = j;
    out.labels = best->labels;
    out.centroids = best->centers;
    return out;
}

double within_cluster_sse(const FeatureMatrix& x, std::span<const int> labels) {
    const int j = *std::max_element(labels.begin(), labels.end()) + 1;
    std::vector<std::vector<double>> centers(j, std::vector<double>(x.cols, 0.0));
    std::vector<std::size_t> counts(j, 0);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const auto r = x.row(i);
        for (std::size_t d = 0; d < x.cols; ++d) centers[labels[i]][d] += r[d];
        ++counts[labels[i]];
    }
    for (int c = 0; c < j; ++c) {
        for (std::size_t d = 0; d < x.cols; ++d) {
            if (counts[c] > 0) centers[c][d] /= static_cast<double>(counts[c]);
        }
    }
    double sse = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) sse += sq_dist(x.row(i), centers[labels[i]]);
    return sse;
}

double silhouette_score(const FeatureMatrix& x, std::span<const int> labels) {
    const std::size_t n = x.rows;
    if (labels.size() != n) throw ShapeError("silhouette: label count mismatch");
    const int j = *std::max_element(labels.begin(), labels.end()) + 1;
    if (j < 2) throw RangeError("silhouette: need at least 2 clusters");
    std::vector<std::size_t> counts(j, 0);
    for (const int label : labels) {
        if (label < 0) throw RangeError("silhouette: negative cluster id");
        ++counts[label];
    }
    for (int c = 0; c < j; ++c) {
        if (counts[c] == 0) throw RangeError("silhouette: empty cluster " + std::to_string(c));
    }

    std::vector<double> scores(n, 0.0);
    parallel_for(n, [&](std::size_t i) {
        if (counts[labels[i]] == 1) return; // singleton scores 0
        std::vector<double> sum(j, 0.0);
        for (std::size_t other = 0; other < n; ++other) {
            if (other == i) continue;
            sum[labels[other]] += std::sqrt(sq_dist(x.row(i), x.row(other)));
        }
        const double a = sum[labels[i]] / static_cast<double>(counts[labels[i]] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (int c = 0; c < j; ++c) {
            if (c == labels[i]) continue;
            b = std::min(b, sum[c] / static_cast<double>(counts[c]));
        }
        const double denom = std::max(a, b);
        scores[i] = denom > 0.0 ? (b - a) / denom : 0.0;
    });

    double total = 0.0;
    for (const double s : scores) total += s;
    return total / static_cast<double>(n);
}

ClusterAssignment select_tau(const std::vector<PsiFeatures>& features, std::uint64_t seed,
                             std::vector<CandidateScore>* candidates) {
    const int k = static_cast<int>(features.size());
    if (k < 3) throw RangeError("select_tau: need at least 3 clients, got " + std::to_string(k));
    const FeatureMatrix x = standardize(build_features(features));

    const int num_candidates = k - 2; // j = 2 .. K-1
    std::vector<ClusterAssignment> assignments(num_candidates);
    std::vector<double> scores(num_candidates,
                               -std::numeric_limits<double>::infinity());
    parallel_for(static_cast<std::size_t>(num_candidates), [&](std::size_t idx) {
        const int j = static_cast<int>(idx) + 2;
        try {
            assignments[idx] =
                kmeans_pp(x, j, derive_seed(seed, "tau", static_cast<std::uint64_t>(j)));
            scores[idx] = silhouette_score(x, assignments[idx].labels);
        } catch (const RangeError&) {
            // fewer distinct feature rows than j; candidate is unachievable
        }
    });

    if (candidates) {
        candidates->clear();
        for (int idx = 0; idx < num_candidates; ++idx) {
            if (std::isfinite(scores[idx])) candidates->push_back({idx + 2, scores[idx]});
        }
    }

    // Ascending-j reduction; strictly greater silhouette wins, ties within
    // 1e-12 keep the smaller j.
    int best = 0;
    for (int idx = 1; idx < num_candidates; ++idx) {
        if (scores[idx] > scores[best] + 1e-12) best = idx;
    }
    if (!std::isfinite(scores[best])) {
        // All client features coincide, so every 2-clustering scores 0 under
        // the a=b=0 convention; return a fixed one.
        ClusterAssignment degenerate;
        degenerate.tau = 2;
        degenerate.labels.assign(features.size(), 1);
        degenerate.labels[0] = 0;
        degenerate.silhouette = 0.0;
        degenerate.centroids = {std::vector<double>(x.row(0).begin(), x.row(0).end()),
                                std::vector<double>(x.row(0).begin(), x.row(0).end())};
        return degenerate;
    }
    ClusterAssignment out = std::move(assignments[best]);
    out.silhouette = scores[best];
    return out;
}

void write_cluster_report(const ClusterAssignment& assignment,
                          const std::vector<CandidateScore>& candidates,
                          const std::string& path) {
    nlohmann::json doc;
    doc["tau"] = assignment.tau;
    doc["silhouette"] = assignment.silhouette;
    auto& rows = doc["assignments"] = nlohmann::json::array();
    for (std::size_t i = 0; i < assignment.labels.size(); ++i) {
        rows.push_back({{"client_id", i}, {"cluster", assignment.labels[i]}});
    }
    auto& cand = doc["candidates"] = nlohmann::json::array();
    for (const auto& c : candidates) {
        cand.push_back({{"j", c.j}, {"silhouette", c.silhouette}});
    }
    std::ofstream out(path);
    if (!out) throw IngestError("cluster report: cannot write '" + path + "'");
    out << doc.dump(2) << "\n";
}

} // namespace fedpsi
