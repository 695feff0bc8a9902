// Forward inference, backpropagation and softmax cross-entropy for ModelSpec networks.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "rubble/audio/dsp.hpp"
#include "rubble/nn/model.hpp"

namespace rubble::nn {

using Probabilities = std::array<double, kNumClasses>;

template <typename T>
void softmax_inplace(std::span<T> z) {
  const T peak = *std::max_element(z.begin(), z.end());
  T sum{0};
  for (auto& v : z) {
    v = std::exp(v - peak);
    sum += v;
  }
  for (auto& v : z) v /= sum;
}

/// -log p[label]; zero when the true class has probability one.
inline double cross_entropy(std::span<const double> probs, std::size_t label) {
  return -std::log(std::max(probs[label], std::numeric_limits<double>::min()));
}

/// Intermediate values kept for the backward pass.
template <typename T>
struct ForwardCache {
  std::vector<std::vector<T>> acts;               // acts[0] = input, acts[i + 1] = output of layer i
  std::vector<std::vector<std::uint32_t>> argmax;  // maxpool winners (input index)
  std::vector<std::vector<T>> dropout_scale;       // keep-mask / (1 - rate), empty at inference
};

namespace detail {

template <typename T>
void conv1d_forward(const LayerSpec& l, Shape in, Shape out, std::span<const T> w, std::span<const T> x,
                    std::vector<T>& y) {
  const std::size_t taps = static_cast<std::size_t>(l.size), ch = in.cols, filters = out.cols;
  const std::size_t bias_at = filters * taps * ch;
  y.assign(out.size(), T{0});
  for (std::size_t t = 0; t < out.rows; ++t) {
    const T* window = x.data() + t * ch;
    for (std::size_t f = 0; f < filters; ++f) {
      const T* kern = w.data() + f * taps * ch;
      T acc = w[bias_at + f];
      for (std::size_t i = 0; i < taps * ch; ++i) acc += kern[i] * window[i];
      if (l.activation == Activation::relu && acc < T{0}) acc = T{0};
      y[t * filters + f] = acc;
    }
  }
}

template <typename T>
void dense_forward(const LayerSpec& l, Shape in, std::span<const T> w, std::span<const T> x, std::vector<T>& y) {
  const std::size_t n_in = in.size(), units = static_cast<std::size_t>(l.units);
  y.assign(units, T{0});
  for (std::size_t u = 0; u < units; ++u) {
    const T* row = w.data() + u * n_in;
    T acc = w[units * n_in + u];
    for (std::size_t j = 0; j < n_in; ++j) acc += row[j] * x[j];
    if (l.activation == Activation::relu && acc < T{0}) acc = T{0};
    y[u] = acc;
  }
}

}  // namespace detail

/// Runs every layer. Dropout is active only when `dropout_rng` is non-null.
template <typename T>
void forward_pass(const ModelSpec& spec, std::span<const Shape> shapes, const Weights<T>& weights,
                  std::span<const T> input, ForwardCache<T>& cache, std::mt19937_64* dropout_rng = nullptr) {
  const std::size_t n = spec.layers.size();
  cache.acts.resize(n + 1);
  cache.argmax.resize(n);
  cache.dropout_scale.resize(n);
  cache.acts[0].assign(input.begin(), input.end());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& l = spec.layers[i];
    const Shape in = shapes[i], out = shapes[i + 1];
    const std::span<const T> x = cache.acts[i];
    auto& y = cache.acts[i + 1];
    const std::span<const T> w = weights.layers[i];
    switch (l.kind) {
      case LayerKind::conv1d:
        detail::conv1d_forward(l, in, out, w, x, y);
        break;
      case LayerKind::dense:
        detail::dense_forward(l, in, w, x, y);
        break;
      case LayerKind::maxpool1d: {
        const std::size_t win = static_cast<std::size_t>(l.size);
        y.assign(out.size(), T{0});
        auto& am = cache.argmax[i];
        am.assign(out.size(), 0);
        for (std::size_t t = 0; t < out.rows; ++t) {
          for (std::size_t c = 0; c < out.cols; ++c) {
            std::size_t best = (t * win) * in.cols + c;
            for (std::size_t j = 1; j < win; ++j) {
              const std::size_t idx = (t * win + j) * in.cols + c;
              if (x[idx] > x[best]) best = idx;
            }
            y[t * out.cols + c] = x[best];
            am[t * out.cols + c] = static_cast<std::uint32_t>(best);
          }
        }
        break;
      }
      case LayerKind::flatten:
        y.assign(x.begin(), x.end());
        break;
      case LayerKind::dropout: {
        y.assign(x.begin(), x.end());
        auto& scale = cache.dropout_scale[i];
        scale.clear();
        if (dropout_rng != nullptr && l.rate > 0.0F) {
          const double keep = 1.0 - static_cast<double>(l.rate);
          scale.resize(y.size());
          for (std::size_t k = 0; k < y.size(); ++k) {
            scale[k] = uniform01(*dropout_rng) < keep ? static_cast<T>(1.0 / keep) : T{0};
            y[k] *= scale[k];
          }
        }
        break;
      }
      case LayerKind::softmax:
        y.assign(x.begin(), x.end());
        softmax_inplace(std::span<T>(y));
        break;
    }
  }
}

/// Class probabilities for one feature matrix. Dropout is inactive.
template <typename T>
Probabilities forward(const ModelSpec& spec, const Weights<T>& weights, const audio::FeatureMatrix& features) {
  if (features.rows != spec.input.rows || features.cols != spec.input.cols) {
    throw ShapeError("features are " + std::to_string(features.rows) + "x" + std::to_string(features.cols) +
                     ", model expects " + std::to_string(spec.input.rows) + "x" + std::to_string(spec.input.cols));
  }
  validate_classifier(spec);
  check_weights_shape(spec, weights);
  const auto shapes = activation_shapes(spec);
  std::vector<T> input(features.values.begin(), features.values.end());
  ForwardCache<T> cache;
  forward_pass<T>(spec, shapes, weights, input, cache);
  Probabilities p{};
  for (std::size_t k = 0; k < kNumClasses; ++k) p[k] = static_cast<double>(cache.acts.back()[k]);
  return p;
}

struct LabeledFeatures {
  audio::FeatureMatrix features;
  SoundClass label = SoundClass::noise;
};

template <typename T>
struct GradientResult {
  Weights<T> grads;
  double loss = 0.0;  // mean categorical cross-entropy
  std::size_t correct = 0;
};

/// Exact gradients of the mean softmax cross-entropy over `batch`.
/// With a non-null `dropout_rng` the gradient is that of the sampled dropout network.
template <typename T>
GradientResult<T> gradients(const ModelSpec& spec, const Weights<T>& weights, std::span<const LabeledFeatures* const> batch,
                            std::mt19937_64* dropout_rng = nullptr) {
  if (batch.empty()) throw std::invalid_argument("gradients: empty batch");
  validate_classifier(spec);
  check_weights_shape(spec, weights);
  const auto shapes = activation_shapes(spec);
  const std::size_t n_layers = spec.layers.size();

  GradientResult<T> out{zero_weights<T>(spec), 0.0, 0};
  ForwardCache<T> cache;
  std::vector<T> input, grad, grad_in;
  const T inv_batch = T{1} / static_cast<T>(batch.size());

  for (const LabeledFeatures* ex : batch) {
    if (ex->features.rows != spec.input.rows || ex->features.cols != spec.input.cols) {
      throw ShapeError("batch example shape does not match model input");
    }
    input.assign(ex->features.values.begin(), ex->features.values.end());
    forward_pass<T>(spec, shapes, weights, input, cache, dropout_rng);

    const std::size_t label = index_of(ex->label);
    const auto& logits = cache.acts[n_layers - 1];
    const auto& probs = cache.acts[n_layers];
    const T peak = *std::max_element(logits.begin(), logits.end());
    T sum{0};
    for (auto z : logits) sum += std::exp(z - peak);
    out.loss += static_cast<double>(peak + std::log(sum) - logits[label]);
    if (static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin()) == label) ++out.correct;

    // softmax + cross-entropy: d loss / d logits = p - y
    grad.assign(probs.begin(), probs.end());
    grad[label] -= T{1};
    for (auto& g : grad) g *= inv_batch;

    for (std::size_t i = n_layers - 1; i-- > 0;) {
      const auto& l = spec.layers[i];
      const Shape in = shapes[i], o = shapes[i + 1];
      const auto& x = cache.acts[i];
      const auto& y = cache.acts[i + 1];
      const bool need_input_grad = i > 0;
      grad_in.assign(in.size(), T{0});
      switch (l.kind) {
        case LayerKind::dense: {
          const std::size_t n_in = in.size(), units = o.cols;
          auto& gw = out.grads.layers[i];
          const auto& w = weights.layers[i];
          for (std::size_t u = 0; u < units; ++u) {
            T g = grad[u];
            if (l.activation == Activation::relu && y[u] <= T{0}) g = T{0};
            if (g == T{0}) continue;
            for (std::size_t j = 0; j < n_in; ++j) gw[u * n_in + j] += g * x[j];
            gw[units * n_in + u] += g;
            if (need_input_grad) {
              for (std::size_t j = 0; j < n_in; ++j) grad_in[j] += w[u * n_in + j] * g;
            }
          }
          break;
        }
        case LayerKind::conv1d: {
          const std::size_t taps = static_cast<std::size_t>(l.size), ch = in.cols, filters = o.cols;
          const std::size_t span_len = taps * ch;
          auto& gw = out.grads.layers[i];
          const auto& w = weights.layers[i];
          for (std::size_t t = 0; t < o.rows; ++t) {
            for (std::size_t f = 0; f < filters; ++f) {
              T g = grad[t * filters + f];
              if (l.activation == Activation::relu && y[t * filters + f] <= T{0}) g = T{0};
              if (g == T{0}) continue;
              T* gk = gw.data() + f * span_len;
              const T* window = x.data() + t * ch;
              for (std::size_t k = 0; k < span_len; ++k) gk[k] += g * window[k];
              gw[filters * span_len + f] += g;
              if (need_input_grad) {
                const T* kern = w.data() + f * span_len;
                T* gi = grad_in.data() + t * ch;
                for (std::size_t k = 0; k < span_len; ++k) gi[k] += kern[k] * g;
              }
            }
          }
          break;
        }
        case LayerKind::maxpool1d: {
          const auto& am = cache.argmax[i];
          for (std::size_t k = 0; k < am.size(); ++k) grad_in[am[k]] += grad[k];
          break;
        }
        case LayerKind::flatten:
          std::copy(grad.begin(), grad.end(), grad_in.begin());
          break;
        case LayerKind::dropout: {
          const auto& scale = cache.dropout_scale[i];
          for (std::size_t k = 0; k < grad.size(); ++k) grad_in[k] = scale.empty() ? grad[k] : grad[k] * scale[k];
          break;
        }
        case LayerKind::softmax:
          throw ShapeError("softmax allowed only as the final layer");
      }
      grad.swap(grad_in);
    }
  }
  out.loss /= static_cast<double>(batch.size());
  return out;
}

template <typename T>
GradientResult<T> gradients(const ModelSpec& spec, const Weights<T>& weights, std::span<const LabeledFeatures> batch,
                            std::mt19937_64* dropout_rng = nullptr) {
  std::vector<const LabeledFeatures*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& ex : batch) ptrs.push_back(&ex);
  return gradients<T>(spec, weights, std::span<const LabeledFeatures* const>(ptrs), dropout_rng);
}

inline constexpr double kDefaultThreshold = 0.6;

/// Top class if its probability reaches `threshold`, otherwise uncertain (nullopt).
/// Ties go to the earlier label.
inline std::optional<SoundClass> classify(const Probabilities& probs, double threshold = kDefaultThreshold) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < probs.size(); ++k) {
    if (probs[k] > probs[best]) best = k;
  }
  if (probs[best] >= threshold) return kAllClasses[best];
  return std::nullopt;
}

inline SoundClass argmax_class(const Probabilities& probs) {
  return kAllClasses[static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin())];
}

struct Prediction {
  Probabilities probabilities{};
  std::optional<SoundClass> decision;  // nullopt = uncertain
  double threshold = kDefaultThreshold;
};

inline Prediction make_prediction(const Probabilities& probs, double threshold = kDefaultThreshold) {
  return {probs, classify(probs, threshold), threshold};
}

}  // namespace rubble::nn
