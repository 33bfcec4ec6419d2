#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fedpsi {

// Per-class example counts; the only statistic clients ever send to the
// server.
using LabelHistogram = std::vector<std::int64_t>;

// Labeled examples in a dense layout: features row-major N x dims, labels in
// [0, num_classes). Immutable after construction by convention.
struct Dataset {
    std::vector<double> features;
    std::size_t dims = 0;
    std::vector<int> labels;
    int num_classes = 0;

    std::size_t size() const { return labels.size(); }

    std::span<const double> row(std::size_t i) const {
        return {features.data() + i * dims, dims};
    }

    // Throws SpecError when labels are out of range, a class is absent,
    // a feature is non-finite, or N < C.
    void validate() const;
};

struct SyntheticSpec {
    int num_classes = 2;
    int examples_per_class = 100;
    int dims = 2;
    double class_separation = 4.0;
    double noise_sigma = 0.5;
    std::uint64_t seed = 0;
};

// Isotropic Gaussian blobs, one per class. Class means sit on a line (dims
// == 1) or on a circle in the first two coordinates (dims >= 2) spaced so
// the minimum pairwise mean distance equals class_separation; for C <= 3 all
// pairwise distances are equal. Pure function of the spec: identical specs
// give bit-identical datasets.
Dataset generate_synthetic(const SyntheticSpec& spec);

// RFC-4180-style CSV with a required header row. The named label column may
// hold arbitrary strings; they are re-encoded to dense {0..C-1} in
// first-appearance order. All other columns must be numeric features and are
// kept in file order.
Dataset load_csv(const std::string& path, const std::string& label_column);

// Inverse boundary: features at 17 significant digits (value-exact for
// doubles), labels as their dense ids.
void write_csv(const Dataset& data, const std::string& path,
               const std::string& label_column = "label");

LabelHistogram label_histogram(std::span<const int> labels, int num_classes);

} // namespace fedpsi
