#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedpsi/divergence.hpp"

namespace fedpsi {

// Row-major K x (C+1) client feature matrix; row i is
// [psi_total_i, psi_per_class_i...]. Standardization records the column
// means/stds it removed for audit.
struct FeatureMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;
    bool standardized = false;
    std::vector<double> means;
    std::vector<double> stds;

    std::span<const double> row(std::size_t i) const {
        return {values.data() + i * cols, cols};
    }
};

struct ClusterAssignment {
    int tau = 0;
    std::vector<int> labels; // one cluster id in [0, tau) per client
    double silhouette = 0.0;
    std::vector<std::vector<double>> centroids;
};

// Rows ordered by ascending client id.
FeatureMatrix build_features(const std::vector<PsiFeatures>& features);

// Column-wise (x - mean) / std with population std; zero-variance columns
// map to all-zeros.
FeatureMatrix standardize(const FeatureMatrix& x);

// Lloyd iterations from K-means++ seeding; best of `restarts` runs by
// within-cluster sum of squares. Empty clusters are repaired by moving the
// point farthest from its centroid. Deterministic given the seed; restarts
// run under parallel_for with per-restart sub-seeds.
ClusterAssignment kmeans_pp(const FeatureMatrix& x, int j, std::uint64_t seed,
                            int max_iters = 100, int restarts = 16);

double within_cluster_sse(const FeatureMatrix& x, std::span<const int> labels);

// Mean over points of (b - a) / max(a, b) with Euclidean distances;
// singletons and zero-distance ties score 0.
double silhouette_score(const FeatureMatrix& x, std::span<const int> labels);

struct CandidateScore {
    int j = 0;
    double silhouette = 0.0;
};

// Sweeps j = 2..K-1 with sub-seed derive_seed(seed, "tau", j), keeping the
// assignment with strictly greater silhouette; ties within 1e-12 keep the
// smaller j. Candidates are evaluated under parallel_for and reduced in
// ascending-j order, so parallelism cannot change the selection.
ClusterAssignment select_tau(const std::vector<PsiFeatures>& features, std::uint64_t seed,
                             std::vector<CandidateScore>* candidates = nullptr);

// {tau, silhouette, assignments: [{client_id, cluster}], candidates: [{j, silhouette}]}
void write_cluster_report(const ClusterAssignment& assignment,
                          const std::vector<CandidateScore>& candidates,
                          const std::string& path);

} // namespace fedpsi
