#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedpsi/dataset.hpp"

namespace fedpsi {

enum class ModelKind { Linear, Mlp };

// Parameter layout descriptor. Linear: [W (C x D), b (C)].
// Mlp: [W1 (H x D), b1 (H), W2 (C x H), b2 (C)] with ReLU hidden units.
struct ModelShape {
    ModelKind kind = ModelKind::Linear;
    int input_dim = 0;
    int num_classes = 0;
    int hidden = 0; // Mlp only

    std::size_t param_count() const;
    bool operator==(const ModelShape&) const = default;
};

// Flat parameter vector; the unit of aggregation.
struct ModelParameters {
    ModelShape shape;
    std::vector<double> values;

    void validate() const; // ShapeError on size mismatch, non-finite entries
};

// Scaled-uniform init: weights uniform in +-sqrt(6 / (fan_in + fan_out)),
// biases zero. Deterministic in the seed and independent of the method so
// paired comparisons start from identical parameters.
ModelParameters init_params(const ModelShape& shape, std::uint64_t seed);

void model_scores(const ModelParameters& params, std::span<const double> x,
                  std::span<double> scores);

// Argmax of scores; ties break toward the smaller class id.
int model_predict(const ModelParameters& params, std::span<const double> x);

// Mean softmax cross-entropy over the batch; writes the analytic gradient
// (same layout as the parameters) and returns the loss.
double batch_loss_grad(const ModelParameters& params, const Dataset& data,
                       std::span<const std::size_t> batch, std::span<double> grad);

} // namespace fedpsi
