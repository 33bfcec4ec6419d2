#pragma once

#include <cstdint>
#include <vector>

#include "fedpsi/dataset.hpp"

namespace fedpsi {

// Probability mass function over class labels.
struct Pmf {
    std::vector<double> probs;

    // Entries >= 0 and summing to 1 within 1e-9.
    void validate() const;
};

// Per-client divergence profile used as the clustering input: the total PSI
// plus its per-class decomposition, with the client's sample count for
// weighting.
struct PsiFeatures {
    int client_id = -1;
    double psi_total = 0.0;
    std::vector<double> psi_per_class;
    std::int64_t sample_count = 0;
};

// Reference label distribution from the aggregated client histograms.
Pmf global_pmf(const std::vector<LabelHistogram>& histograms);

Pmf pmf_from_histogram(const LabelHistogram& counts);

// Additive smoothing (p + eps) / (1 + C*eps); keeps every entry strictly
// positive so the PSI log term is defined.
Pmf smooth(const Pmf& pmf, double epsilon);

// Per-class terms (P(c) - Pi(c)) * ln(P(c)/Pi(c)) and their sum. Both pmfs
// must be strictly positive (smooth first); each term is >= 0 and the sum is
// symmetric in the arguments (Jeffreys divergence).
PsiFeatures psi_client(const Pmf& global, const Pmf& client);

// Sample-weighted federation average of per-client PSI totals.
double wpsi(const std::vector<PsiFeatures>& features);

// sqrt(1 - sum_c sqrt(P(c) * Pi(c))), clamped to [0, 1].
double hellinger(const Pmf& global, const Pmf& client);

// sqrt of the Jensen-Shannon divergence with base-2 logs (range [0, 1]);
// zero-mass terms contribute 0.
double jensen_shannon(const Pmf& global, const Pmf& client);

// L1 distance; labels carry unit ground distance.
double emd_label(const Pmf& global, const Pmf& client);

enum class FederationMetric { Wpsi, Hellinger, JensenShannon, Emd };

// Federation-level value: WPSI per its definition, the other metrics as the
// sample-weighted mean of per-client distances to the global pmf. Smoothing
// applies only to the PSI path.
double federation_metric(const std::vector<LabelHistogram>& histograms,
                         FederationMetric metric, double epsilon);

// PSI features for every client against the smoothed global pmf;
// client_id = histogram position, sample_count = histogram total.
std::vector<PsiFeatures> psi_features(const std::vector<LabelHistogram>& histograms,
                                      double epsilon);

} // namespace fedpsi
