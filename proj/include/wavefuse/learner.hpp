#pragma once

// One-hidden-layer ReLU MLP with inverted dropout on the hidden layer.
//
// Supplies what the acquisition strategies consume: class probabilities,
// MC-dropout probability stacks, penultimate (hidden) embeddings, last-layer
// gradient embeddings and global average pooling for spatial feature maps.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "wavefuse/dataset.hpp"
#include "wavefuse/error.hpp"
#include "wavefuse/matrix.hpp"
#include "wavefuse/random.hpp"

namespace wavefuse {

struct MlpParams {
    Matrix w1;               // d x D
    std::vector<double> b1;  // D
    Matrix w2;               // D x K
    std::vector<double> b2;  // K
    double dropout_p = 0.0;

    std::size_t input_dim() const noexcept { return w1.rows(); }
    std::size_t hidden_dim() const noexcept { return w1.cols(); }
    std::size_t num_classes() const noexcept { return w2.cols(); }

    static MlpParams zeros(std::size_t d, std::size_t hidden, std::size_t k, double dropout_p = 0.0) {
        return {Matrix(d, hidden), std::vector<double>(hidden, 0.0), Matrix(hidden, k),
                std::vector<double>(k, 0.0), dropout_p};
    }

    std::size_t parameter_count() const noexcept {
        return w1.rows() * w1.cols() + b1.size() + w2.rows() * w2.cols() + b2.size();
    }

    // Flat view order: w1, b1, w2, b2.
    std::vector<double> flatten() const {
        std::vector<double> out;
        out.reserve(parameter_count());
        out.insert(out.end(), w1.data().begin(), w1.data().end());
        out.insert(out.end(), b1.begin(), b1.end());
        out.insert(out.end(), w2.data().begin(), w2.data().end());
        out.insert(out.end(), b2.begin(), b2.end());
        return out;
    }

    void assign_flat(std::span<const double> flat) {
        if (flat.size() != parameter_count()) throw Error(ErrorKind::shape, "flat parameter size mismatch");
        auto it = flat.begin();
        auto copy_into = [&it](std::span<double> dst) {
            std::copy(it, it + static_cast<std::ptrdiff_t>(dst.size()), dst.begin());
            it += static_cast<std::ptrdiff_t>(dst.size());
        };
        copy_into(w1.data());
        copy_into(b1);
        copy_into(w2.data());
        copy_into(b2);
    }

    friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

struct TrainConfig {
    std::size_t hidden_dim = 32;
    double dropout_p = 0.2;
    double learning_rate = 0.1;
    std::size_t epochs = 100;
    std::size_t minibatch = 32;
    double l2 = 1e-4;
    std::uint64_t seed = 0;

    void validate() const {
        if (hidden_dim < 1) throw Error(ErrorKind::config, "hidden_dim must be >= 1");
        if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw Error(ErrorKind::config, "dropout_p must lie in [0, 1)");
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
            throw Error(ErrorKind::config, "learning_rate must be > 0");
        }
        if (epochs < 1) throw Error(ErrorKind::config, "epochs must be >= 1");
        if (minibatch < 1) throw Error(ErrorKind::config, "minibatch must be >= 1");
        if (!(l2 >= 0.0) || !std::isfinite(l2)) throw Error(ErrorKind::config, "l2 must be >= 0");
    }
};

// M x n x K tensor of class probabilities from stochastic forward passes.
class McStack {
public:
    McStack() = default;
    McStack(std::size_t passes, std::size_t samples, std::size_t classes)
        : passes_(passes), samples_(samples), classes_(classes), data_(passes * samples * classes, 0.0) {}

    std::size_t passes() const noexcept { return passes_; }
    std::size_t samples() const noexcept { return samples_; }
    std::size_t classes() const noexcept { return classes_; }

    std::span<double> row(std::size_t pass, std::size_t sample) noexcept {
        return {data_.data() + (pass * samples_ + sample) * classes_, classes_};
    }
    std::span<const double> row(std::size_t pass, std::size_t sample) const noexcept {
        return {data_.data() + (pass * samples_ + sample) * classes_, classes_};
    }

    friend bool operator==(const McStack&, const McStack&) = default;

private:
    std::size_t passes_ = 0;
    std::size_t samples_ = 0;
    std::size_t classes_ = 0;
    std::vector<double> data_;
};

// Channel-major D x H x W activation map.
struct FeatureMap {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;

    double at(std::size_t c, std::size_t y, std::size_t x) const noexcept {
        return values[(c * height + y) * width + x];
    }
};

namespace detail {

inline void check_width(const MlpParams& params, const Matrix& features) {
    if (features.cols() != params.input_dim()) {
        throw Error(ErrorKind::shape, "feature width " + std::to_string(features.cols()) + " does not match model input " +
                                          std::to_string(params.input_dim()));
    }
}

inline void hidden_activations(const MlpParams& params, std::span<const double> x, std::span<double> pre,
                               std::span<double> post) {
    const std::size_t hidden = params.hidden_dim();
    for (std::size_t j = 0; j < hidden; ++j) pre[j] = params.b1[j];
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = x[i];
        const auto w = params.w1.row(i);
        for (std::size_t j = 0; j < hidden; ++j) pre[j] += xi * w[j];
    }
    for (std::size_t j = 0; j < hidden; ++j) post[j] = pre[j] > 0.0 ? pre[j] : 0.0;
}

inline void output_logits(const MlpParams& params, std::span<const double> hidden, std::span<double> logits) {
    const std::size_t k = params.num_classes();
    for (std::size_t c = 0; c < k; ++c) logits[c] = params.b2[c];
    for (std::size_t j = 0; j < hidden.size(); ++j) {
        const double hj = hidden[j];
        if (hj == 0.0) continue;
        const auto w = params.w2.row(j);
        for (std::size_t c = 0; c < k; ++c) logits[c] += hj * w[c];
    }
}

}  // namespace detail

// Numerically stable softmax, in place.
inline void softmax_inplace(std::span<double> v) noexcept {
    const double mx = *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    for (auto& x : v) {
        x = std::exp(x - mx);
        sum += x;
    }
    for (auto& x : v) x /= sum;
}

// Per-(sample, unit) keep mask drawn with keep probability 1 - p.
inline void draw_dropout_mask(Rng& rng, double p, std::span<double> scale) noexcept {
    const double keep_scale = 1.0 / (1.0 - p);
    for (auto& s : scale) s = uniform01(rng) >= p ? keep_scale : 0.0;
}

inline MlpParams init_params(std::size_t input_dim, std::size_t hidden_dim, std::size_t num_classes, double dropout_p,
                             std::uint64_t seed) {
    auto params = MlpParams::zeros(input_dim, hidden_dim, num_classes, dropout_p);
    Rng rng(derive_seed(seed, {0x1417ULL}));
    const double s1 = std::sqrt(2.0 / static_cast<double>(input_dim));
    const double s2 = std::sqrt(1.0 / static_cast<double>(hidden_dim));
    for (auto& w : params.w1.data()) w = s1 * standard_normal(rng);
    for (auto& w : params.w2.data()) w = s2 * standard_normal(rng);
    return params;
}

inline Matrix predict_proba(const MlpParams& params, const Matrix& features) {
    detail::check_width(params, features);
    const std::size_t hidden = params.hidden_dim();
    Matrix probs(features.rows(), params.num_classes());
    std::vector<double> pre(hidden), post(hidden);
    for (std::size_t i = 0; i < features.rows(); ++i) {
        detail::hidden_activations(params, features.row(i), pre, post);
        detail::output_logits(params, post, probs.row(i));
        softmax_inplace(probs.row(i));
    }
    return probs;
}

inline McStack mc_dropout_predict(const MlpParams& params, const Matrix& features, std::size_t passes,
                                  std::uint64_t seed) {
    if (passes < 2) throw Error(ErrorKind::config, "MC dropout needs at least 2 passes");
    detail::check_width(params, features);
    const std::size_t hidden = params.hidden_dim();
    const std::size_t n = features.rows();
    McStack stack(passes, n, params.num_classes());

    // Hidden activations do not depend on the mask; compute them once.
    Matrix activ(n, hidden);
    std::vector<double> pre(hidden);
    for (std::size_t i = 0; i < n; ++i) detail::hidden_activations(params, features.row(i), pre, activ.row(i));

    Rng rng(derive_seed(seed, {0xdd0ULL}));
    std::vector<double> scale(hidden), dropped(hidden);
    for (std::size_t m = 0; m < passes; ++m) {
        for (std::size_t i = 0; i < n; ++i) {
            auto h = activ.row(i);
            if (params.dropout_p > 0.0) {
                draw_dropout_mask(rng, params.dropout_p, scale);
                for (std::size_t j = 0; j < hidden; ++j) dropped[j] = h[j] * scale[j];
                detail::output_logits(params, dropped, stack.row(m, i));
            } else {
                detail::output_logits(params, h, stack.row(m, i));
            }
            softmax_inplace(stack.row(m, i));
        }
    }
    return stack;
}

inline Matrix penultimate_embeddings(const MlpParams& params, const Matrix& features) {
    detail::check_width(params, features);
    Matrix emb(features.rows(), params.hidden_dim());
    std::vector<double> pre(params.hidden_dim());
    for (std::size_t i = 0; i < features.rows(); ++i) {
        detail::hidden_activations(params, features.row(i), pre, emb.row(i));
    }
    return emb;
}

// Row i is the flattened outer product (onehot(argmax f) - f) (x) h, class-major:
// entry c * D + j = (yhat_c - f_c) * h_j.
inline Matrix gradient_embeddings_from(const Matrix& probs, const Matrix& hidden) {
    if (probs.rows() != hidden.rows()) throw Error(ErrorKind::shape, "probability and embedding row counts differ");
    const std::size_t k = probs.cols();
    const std::size_t d = hidden.cols();
    Matrix out(probs.rows(), k * d);
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        const auto f = probs.row(i);
        const auto h = hidden.row(i);
        const auto top = static_cast<std::size_t>(std::max_element(f.begin(), f.end()) - f.begin());
        auto g = out.row(i);
        for (std::size_t c = 0; c < k; ++c) {
            const double residual = (c == top ? 1.0 : 0.0) - f[c];
            for (std::size_t j = 0; j < d; ++j) g[c * d + j] = residual * h[j];
        }
    }
    return out;
}

inline Matrix gradient_embeddings(const MlpParams& params, const Matrix& features) {
    return gradient_embeddings_from(predict_proba(params, features), penultimate_embeddings(params, features));
}

inline std::vector<double> global_average_pool(const FeatureMap& map) {
    if (map.height < 1 || map.width < 1) throw Error(ErrorKind::shape, "feature map needs H, W >= 1");
    if (map.values.size() != map.channels * map.height * map.width) {
        throw Error(ErrorKind::shape, "feature map value count does not match D x H x W");
    }
    const std::size_t area = map.height * map.width;
    std::vector<double> pooled(map.channels, 0.0);
    for (std::size_t c = 0; c < map.channels; ++c) {
        double acc = 0.0;
        for (std::size_t u = 0; u < area; ++u) acc += map.values[c * area + u];
        pooled[c] = acc / static_cast<double>(area);
    }
    return pooled;
}

struct LossAndGradient {
    double loss = 0.0;
    MlpParams gradient;
};

// Mean cross-entropy over the rows plus (l2 / 2) * (|W1|^2 + |W2|^2).
// `dropout_scale`, when non-empty, is a rows x D matrix of per-unit multipliers
// (0 or 1/(1-p)) applied to the hidden activations.
inline LossAndGradient loss_and_gradient(const MlpParams& params, const Matrix& features, std::span<const int> labels,
                                         double l2, const Matrix& dropout_scale = {}) {
    detail::check_width(params, features);
    if (labels.size() != features.rows()) throw Error(ErrorKind::shape, "label count does not match feature rows");
    const bool use_mask = !dropout_scale.empty();
    if (use_mask && (dropout_scale.rows() != features.rows() || dropout_scale.cols() != params.hidden_dim())) {
        throw Error(ErrorKind::shape, "dropout scale must be rows x hidden_dim");
    }
    const std::size_t hidden = params.hidden_dim();
    const std::size_t k = params.num_classes();
    const std::size_t n = features.rows();
    const double inv_n = 1.0 / static_cast<double>(n);

    LossAndGradient out{0.0, MlpParams::zeros(params.input_dim(), hidden, k, params.dropout_p)};
    auto& g = out.gradient;
    std::vector<double> pre(hidden), post(hidden), dropped(hidden), logits(k), dz2(k), dh(hidden);
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = features.row(i);
        detail::hidden_activations(params, x, pre, post);
        for (std::size_t j = 0; j < hidden; ++j) dropped[j] = use_mask ? post[j] * dropout_scale(i, j) : post[j];
        detail::output_logits(params, dropped, logits);
        softmax_inplace(logits);
        const auto y = static_cast<std::size_t>(labels[i]);
        out.loss -= std::log(std::max(logits[y], std::numeric_limits<double>::min())) * inv_n;

        for (std::size_t c = 0; c < k; ++c) dz2[c] = (logits[c] - (c == y ? 1.0 : 0.0)) * inv_n;
        for (std::size_t c = 0; c < k; ++c) g.b2[c] += dz2[c];
        for (std::size_t j = 0; j < hidden; ++j) {
            auto gw = g.w2.row(j);
            const auto w = params.w2.row(j);
            double back = 0.0;
            for (std::size_t c = 0; c < k; ++c) {
                gw[c] += dropped[j] * dz2[c];
                back += w[c] * dz2[c];
            }
            if (use_mask) back *= dropout_scale(i, j);
            dh[j] = pre[j] > 0.0 ? back : 0.0;
        }
        for (std::size_t j = 0; j < hidden; ++j) g.b1[j] += dh[j];
        for (std::size_t r = 0; r < x.size(); ++r) {
            const double xr = x[r];
            auto gw = g.w1.row(r);
            for (std::size_t j = 0; j < hidden; ++j) gw[j] += xr * dh[j];
        }
    }
    if (l2 > 0.0) {
        double sq = 0.0;
        for (std::size_t t = 0; t < params.w1.data().size(); ++t) {
            sq += params.w1.data()[t] * params.w1.data()[t];
            g.w1.data()[t] += l2 * params.w1.data()[t];
        }
        for (std::size_t t = 0; t < params.w2.data().size(); ++t) {
            sq += params.w2.data()[t] * params.w2.data()[t];
            g.w2.data()[t] += l2 * params.w2.data()[t];
        }
        out.loss += 0.5 * l2 * sq;
    }
    return out;
}

struct TrainResult {
    MlpParams params;
    std::vector<double> loss_history;  // full objective, dropout off, after each epoch
};

// Minibatch gradient descent from a seeded initialization. With minibatch >=
// |labeled| every step is a full-batch step.
inline TrainResult train_with_history(const Dataset& data, std::span<const std::size_t> labeled,
                                      const TrainConfig& config) {
    config.validate();
    if (labeled.empty()) throw Error(ErrorKind::config, "training needs at least one labeled sample");
    const Matrix x = data.features.gather(labeled);
    std::vector<int> y;
    y.reserve(labeled.size());
    for (auto idx : labeled) y.push_back(data.labels[idx]);

    TrainResult result{init_params(data.dim(), config.hidden_dim, static_cast<std::size_t>(data.num_classes),
                                   config.dropout_p, config.seed),
                       {}};
    auto& params = result.params;
    Rng rng(derive_seed(config.seed, {0x7a1ULL}));
    const std::size_t n = labeled.size();
    const std::size_t batch = std::min(config.minibatch, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> flat = params.flatten();

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        if (batch < n) shuffle(std::span<std::size_t>(order), rng);
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t stop = std::min(start + batch, n);
            std::span<const std::size_t> rows(order.data() + start, stop - start);
            const Matrix xb = x.gather(rows);
            std::vector<int> yb;
            yb.reserve(rows.size());
            for (auto r : rows) yb.push_back(y[r]);
            Matrix scale;
            if (config.dropout_p > 0.0) {
                scale = Matrix(rows.size(), config.hidden_dim);
                for (std::size_t i = 0; i < rows.size(); ++i) draw_dropout_mask(rng, config.dropout_p, scale.row(i));
            }
            const auto step = loss_and_gradient(params, xb, yb, config.l2, scale);
            const auto grad = step.gradient.flatten();
            for (std::size_t t = 0; t < flat.size(); ++t) flat[t] -= config.learning_rate * grad[t];
            params.assign_flat(flat);
        }
        const double loss = loss_and_gradient(params, x, y, config.l2).loss;
        if (!std::isfinite(loss)) {
            throw Error(ErrorKind::divergence, "training loss became non-finite at epoch " + std::to_string(epoch));
        }
        result.loss_history.push_back(loss);
    }
    return result;
}

inline MlpParams train(const Dataset& data, std::span<const std::size_t> labeled, const TrainConfig& config) {
    return train_with_history(data, labeled, config).params;
}

inline std::vector<int> predict_labels(const Matrix& probs) {
    std::vector<int> out(probs.rows());
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        const auto r = probs.row(i);
        out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
    }
    return out;
}

}  // namespace wavefuse
