#include "fedpsi/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedpsi/errors.hpp"
#include "fedpsi/rng.hpp"

namespace fedpsi {

std::size_t ModelShape::param_count() const {
    const auto d = static_cast<std::size_t>(input_dim);
    const auto c = static_cast<std::size_t>(num_classes);
    if (kind == ModelKind::Linear) return c * d + c;
    const auto h = static_cast<std::size_t>(hidden);
    return h * d + h + c * h + c;
}

void ModelParameters::validate() const {
    if (shape.input_dim < 1 || shape.num_classes < 2)
        throw ShapeError("model: input_dim >= 1 and num_classes >= 2 required");
    if (shape.kind == ModelKind::Mlp && shape.hidden < 1)
        throw ShapeError("model: mlp requires hidden >= 1");
    if (values.size() != shape.param_count())
        throw ShapeError("model: parameter vector has " + std::to_string(values.size()) +
                         " entries, shape needs " + std::to_string(shape.param_count()));
    for (const double v : values) {
        if (!std::isfinite(v)) throw ShapeError("model: non-finite parameter");
    }
}

ModelParameters init_params(const ModelShape& shape, std::uint64_t seed) {
    ModelParameters params;
    params.shape = shape;
    params.values.assign(shape.param_count(), 0.0);
    params.validate();

    Rng rng(seed);
    const auto fill_uniform = [&rng](std::span<double> block, int fan_in, int fan_out) {
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (double& v : block) v = (2.0 * rng.uniform01() - 1.0) * bound;
    };

    std::span<double> all(params.values);
    const auto d = static_cast<std::size_t>(shape.input_dim);
    const auto c = static_cast<std::size_t>(shape.num_classes);
    if (shape.kind == ModelKind::Linear) {
        fill_uniform(all.subspan(0, c * d), shape.input_dim, shape.num_classes);
    } else {
        const auto h = static_cast<std::size_t>(shape.hidden);
        fill_uniform(all.subspan(0, h * d), shape.input_dim, shape.hidden);
        fill_uniform(all.subspan(h * d + h, c * h), shape.hidden, shape.num_classes);
    }
    return params;
}

namespace {

// Numerically-shifted softmax in place.
void softmax(std::span<double> scores) {
    const double peak = *std::max_element(scores.begin(), scores.end());
    double total = 0.0;
    for (double& s : scores) {
        s = std::exp(s - peak);
        total += s;
    }
    for (double& s : scores) s /= total;
}

void linear_scores(std::span<const double> w, std::span<const double> b,
                   std::span<const double> x, std::span<double> out) {
    const std::size_t d = x.size();
    for (std::size_t c = 0; c < out.size(); ++c) {
        double acc = b[c];
        const double* row = w.data() + c * d;
        for (std::size_t i = 0; i < d; ++i) acc += row[i] * x[i];
        out[c] = acc;
    }
}

struct MlpView {
    std::span<const double> w1, b1, w2, b2;
};

MlpView mlp_view(const ModelParameters& params) {
    const auto d = static_cast<std::size_t>(params.shape.input_dim);
    const auto h = static_cast<std::size_t>(params.shape.hidden);
    const auto c = static_cast<std::size_t>(params.shape.num_classes);
    std::span<const double> all(params.values);
    return {all.subspan(0, h * d), all.subspan(h * d, h),
            all.subspan(h * d + h, c * h), all.subspan(h * d + h + c * h, c)};
}

} // namespace

void model_scores(const ModelParameters& params, std::span<const double> x,
                  std::span<double> scores) {
    const auto d = static_cast<std::size_t>(params.shape.input_dim);
    const auto c = static_cast<std::size_t>(params.shape.num_classes);
    if (x.size() != d || scores.size() != c)
        throw ShapeError("model_scores: input/output size mismatch");
    if (params.shape.kind == ModelKind::Linear) {
        std::span<const double> all(params.values);
        linear_scores(all.subspan(0, c * d), all.subspan(c * d, c), x, scores);
        return;
    }
    const MlpView v = mlp_view(params);
    const auto h = static_cast<std::size_t>(params.shape.hidden);
    std::vector<double> hid(h);
    linear_scores(v.w1, v.b1, x, hid);
    for (double& value : hid) value = std::max(value, 0.0);
    linear_scores(v.w2, v.b2, hid, scores);
}

int model_predict(const ModelParameters& params, std::span<const double> x) {
    std::vector<double> scores(params.shape.num_classes);
    model_scores(params, x, scores);
    int best = 0;
    for (int c = 1; c < params.shape.num_classes; ++c) {
        if (scores[c] > scores[best]) best = c;
    }
    return best;
}

double batch_loss_grad(const ModelParameters& params, const Dataset& data,
                       std::span<const std::size_t> batch, std::span<double> grad) {
    if (batch.empty()) throw EmptyShard("batch_loss_grad: empty batch");
    if (grad.size() != params.values.size())
        throw ShapeError("batch_loss_grad: gradient buffer size mismatch");
    const auto d = static_cast<std::size_t>(params.shape.input_dim);
    const auto c = static_cast<std::size_t>(params.shape.num_classes);
    if (data.dims != d) throw ShapeError("batch_loss_grad: dataset dims mismatch");

    std::fill(grad.begin(), grad.end(), 0.0);
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    std::vector<double> probs(c);

    if (params.shape.kind == ModelKind::Linear) {
        std::span<const double> all(params.values);
        const auto w = all.subspan(0, c * d);
        const auto b = all.subspan(c * d, c);
        std::span<double> gw = grad.subspan(0, c * d);
        std::span<double> gb = grad.subspan(c * d, c);
        for (const std::size_t idx : batch) {
            const auto x = data.row(idx);
            linear_scores(w, b, x, probs);
            softmax(probs);
            const int y = data.labels[idx];
            loss -= std::log(std::max(probs[y], 1e-300)) * inv_batch;
            for (std::size_t k = 0; k < c; ++k) {
                const double delta = (probs[k] - (static_cast<int>(k) == y ? 1.0 : 0.0)) *
                                     inv_batch;
                gb[k] += delta;
                double* grow = gw.data() + k * d;
                for (std::size_t i = 0; i < d; ++i) grow[i] += delta * x[i];
            }
        }
        return loss;
    }

    const MlpView v = mlp_view(params);
    const auto h = static_cast<std::size_t>(params.shape.hidden);
    std::span<double> gw1 = grad.subspan(0, h * d);
    std::span<double> gb1 = grad.subspan(h * d, h);
    std::span<double> gw2 = grad.subspan(h * d + h, c * h);
    std::span<double> gb2 = grad.subspan(h * d + h + c * h, c);
    std::vector<double> hid(h), dhid(h);
    for (const std::size_t idx : batch) {
        const auto x = data.row(idx);
        linear_scores(v.w1, v.b1, x, hid);
        for (double& value : hid) value = std::max(value, 0.0);
        linear_scores(v.w2, v.b2, hid, probs);
        softmax(probs);
        const int y = data.labels[idx];
        loss -= std::log(std::max(probs[y], 1e-300)) * inv_batch;

        std::fill(dhid.begin(), dhid.end(), 0.0);
        for (std::size_t k = 0; k < c; ++k) {
            const double delta = (probs[k] - (static_cast<int>(k) == y ? 1.0 : 0.0)) * inv_batch;
            gb2[k] += delta;
            double* grow = gw2.data() + k * h;
            const double* wrow = v.w2.data() + k * h;
            for (std::size_t j = 0; j < h; ++j) {
                grow[j] += delta * hid[j];
                dhid[j] += delta * wrow[j];
            }
        }
        for (std::size_t j = 0; j < h; ++j) {
            if (hid[j] <= 0.0) continue; // ReLU gate
            gb1[j] += dhid[j];
            double* grow = gw1.data() + j * d;
            for (std::size_t i = 0; i < d; ++i) grow[i] += dhid[j] * x[i];
        }
    }
    return loss;
}

} // namespace fedpsi
