#include "fedpsi/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedpsi/errors.hpp"

namespace fedpsi {

void Pmf::validate() const {
    double sum = 0.0;
    for (const double p : probs) {
        if (p < 0.0 || !std::isfinite(p)) throw RangeError("pmf: negative or non-finite entry");
        sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-9)
        throw RangeError("pmf: entries sum to " + std::to_string(sum) + ", expected 1");
}

namespace {

void check_same_length(const Pmf& a, const Pmf& b) {
    if (a.probs.size() != b.probs.size())
        throw ShapeError("pmf: length mismatch (" + std::to_string(a.probs.size()) + " vs " +
                         std::to_string(b.probs.size()) + ")");
}

std::int64_t histogram_total(const LabelHistogram& counts) {
    std::int64_t total = 0;
    for (const std::int64_t c : counts) {
        if (c < 0) throw RangeError("histogram: negative count");
        total += c;
    }
    return total;
}

} // namespace

Pmf global_pmf(const std::vector<LabelHistogram>& histograms) {
    if (histograms.empty()) throw EmptyFederation("global_pmf: no histograms");
    const std::size_t num_classes = histograms[0].size();
    std::vector<std::int64_t> totals(num_classes, 0);
    std::int64_t grand = 0;
    for (const auto& h : histograms) {
        if (h.size() != num_classes) throw ShapeError("global_pmf: histogram length mismatch");
        for (std::size_t c = 0; c < num_classes; ++c) {
            if (h[c] < 0) throw RangeError("global_pmf: negative count");
            totals[c] += h[c];
            grand += h[c];
        }
    }
    if (grand == 0) throw EmptyFederation("global_pmf: zero total count");
    Pmf out;
    out.probs.resize(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
        out.probs[c] = static_cast<double>(totals[c]) / static_cast<double>(grand);
    }
    return out;
}

Pmf pmf_from_histogram(const LabelHistogram& counts) {
    const std::int64_t total = histogram_total(counts);
    if (total == 0) throw EmptyFederation("pmf: zero total count");
    Pmf out;
    out.probs.resize(counts.size());
    for (std::size_t c = 0; c < counts.size(); ++c) {
        out.probs[c] = static_cast<double>(counts[c]) / static_cast<double>(total);
    }
    return out;
}

Pmf smooth(const Pmf& pmf, double epsilon) {
    if (!(epsilon > 0.0)) throw RangeError("smooth: epsilon must be > 0");
    const double denom = 1.0 + static_cast<double>(pmf.probs.size()) * epsilon;
    Pmf out;
    out.probs.resize(pmf.probs.size());
    for (std::size_t c = 0; c < pmf.probs.size(); ++c) {
        out.probs[c] = (pmf.probs[c] + epsilon) / denom;
    }
    return out;
}

PsiFeatures psi_client(const Pmf& global, const Pmf& client) {
    check_same_length(global, client);
    PsiFeatures out;
    out.psi_per_class.resize(global.probs.size());
    double total = 0.0;
    for (std::size_t c = 0; c < global.probs.size(); ++c) {
        const double p = global.probs[c];
        const double q = client.probs[c];
        if (!(p > 0.0) || !(q > 0.0))
            throw NeedsSmoothing("psi: zero entry at class " + std::to_string(c) +
                                 "; smooth both pmfs first");
        const double term = (p - q) * std::log(p / q);
        out.psi_per_class[c] = term;
        total += term;
    }
    out.psi_total = total;
    return out;
}

double wpsi(const std::vector<PsiFeatures>& features) {
    if (features.empty()) throw EmptyFederation("wpsi: no clients");
    std::int64_t total = 0;
    for (const auto& f : features) {
        if (f.sample_count <= 0) throw RangeError("wpsi: sample_count must be > 0");
        total += f.sample_count;
    }
    double acc = 0.0;
    for (const auto& f : features) {
        acc += static_cast<double>(f.sample_count) / static_cast<double>(total) * f.psi_total;
    }
    return acc;
}

double hellinger(const Pmf& global, const Pmf& client) {
    check_same_length(global, client);
    // 0.5 * sum (sqrt(p) - sqrt(q))^2 equals 1 - sum sqrt(p*q) on normalized
    // pmfs and is exactly zero for identical inputs.
    double squared = 0.0;
    for (std::size_t c = 0; c < global.probs.size(); ++c) {
        const double diff = std::sqrt(global.probs[c]) - std::sqrt(client.probs[c]);
        squared += diff * diff;
    }
    return std::sqrt(std::clamp(0.5 * squared, 0.0, 1.0));
}

double jensen_shannon(const Pmf& global, const Pmf& client) {
    check_same_length(global, client);
    double divergence = 0.0;
    for (std::size_t c = 0; c < global.probs.size(); ++c) {
        const double p = global.probs[c];
        const double q = client.probs[c];
        const double m = 0.5 * (p + q);
        if (p > 0.0) divergence += 0.5 * p * std::log2(p / m);
        if (q > 0.0) divergence += 0.5 * q * std::log2(q / m);
    }
    return std::sqrt(std::clamp(divergence, 0.0, 1.0));
}

double emd_label(const Pmf& global, const Pmf& client) {
    check_same_length(global, client);
    double distance = 0.0;
    for (std::size_t c = 0; c < global.probs.size(); ++c) {
        distance += std::fabs(global.probs[c] - client.probs[c]);
    }
    return distance;
}

std::vector<PsiFeatures> psi_features(const std::vector<LabelHistogram>& histograms,
                                      double epsilon) {
    const Pmf reference = smooth(global_pmf(histograms), epsilon);
    std::vector<PsiFeatures> out;
    out.reserve(histograms.size());
    for (std::size_t i = 0; i < histograms.size(); ++i) {
        const std::int64_t count = histogram_total(histograms[i]);
        if (count == 0)
            throw EmptyFederation("psi_features: client " + std::to_string(i) +
                                  " has no samples");
        PsiFeatures f = psi_client(reference, smooth(pmf_from_histogram(histograms[i]), epsilon));
        f.client_id = static_cast<int>(i);
        f.sample_count = count;
        out.push_back(std::move(f));
    }
    return out;
}

double federation_metric(const std::vector<LabelHistogram>& histograms,
                         FederationMetric metric, double epsilon) {
    if (metric == FederationMetric::Wpsi) return wpsi(psi_features(histograms, epsilon));

    const Pmf reference = global_pmf(histograms);
    std::int64_t total = 0;
    for (const auto& h : histograms) total += histogram_total(h);
    if (total == 0) throw EmptyFederation("federation_metric: zero total count");
    double acc = 0.0;
    for (const auto& h : histograms) {
        const std::int64_t count = histogram_total(h);
        if (count == 0) continue;
        const Pmf client = pmf_from_histogram(h);
        double d = 0.0;
        switch (metric) {
        case FederationMetric::Hellinger: d = hellinger(reference, client); break;
        case FederationMetric::JensenShannon: d = jensen_shannon(reference, client); break;
        case FederationMetric::Emd: d = emd_label(reference, client); break;
        case FederationMetric::Wpsi: break; // handled above
        }
        acc += static_cast<double>(count) / static_cast<double>(total) * d;
    }
    return acc;
}

} // namespace fedpsi
