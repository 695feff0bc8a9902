// Sequential model description, shape inference and parameter storage.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rubble/core.hpp"

namespace rubble::nn {

enum class LayerKind : std::uint8_t { conv1d = 1, maxpool1d = 2, flatten = 3, dense = 4, dropout = 5, softmax = 6 };
enum class Activation : std::uint8_t { linear = 0, relu = 1 };

inline std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv1d: return "conv1d";
    case LayerKind::maxpool1d: return "maxpool1d";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
    case LayerKind::dropout: return "dropout";
    case LayerKind::softmax: return "softmax";
  }
  return "?";
}

/// One layer. `units` is the filter count for conv1d and the width for dense;
/// `size` is the kernel for conv1d and the window for maxpool1d.
struct LayerSpec {
  LayerKind kind = LayerKind::flatten;
  int units = 0;
  int size = 0;
  Activation activation = Activation::linear;
  float rate = 0.0F;

  static LayerSpec conv1d(int filters, int kernel, Activation act = Activation::relu) {
    return {LayerKind::conv1d, filters, kernel, act, 0.0F};
  }
  static LayerSpec maxpool1d(int window = 2) { return {LayerKind::maxpool1d, 0, window, Activation::linear, 0.0F}; }
  static LayerSpec flatten() { return {LayerKind::flatten, 0, 0, Activation::linear, 0.0F}; }
  static LayerSpec dense(int units, Activation act = Activation::linear) {
    return {LayerKind::dense, units, 0, act, 0.0F};
  }
  static LayerSpec dropout(float rate) { return {LayerKind::dropout, 0, 0, Activation::linear, rate}; }
  static LayerSpec softmax() { return {LayerKind::softmax, 0, 0, Activation::linear, 0.0F}; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Activation shape: time steps x channels. Flattened tensors are 1 x n.
struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

struct ModelSpec {
  Shape input;
  std::vector<LayerSpec> layers;
  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

inline Shape output_shape(const LayerSpec& layer, Shape in) {
  switch (layer.kind) {
    case LayerKind::conv1d:
      if (layer.units <= 0 || layer.size <= 0) throw ShapeError("conv1d needs positive filters and kernel");
      if (in.rows < static_cast<std::size_t>(layer.size)) {
        throw ShapeError("conv1d kernel " + std::to_string(layer.size) + " longer than input length " +
                         std::to_string(in.rows));
      }
      return {in.rows - static_cast<std::size_t>(layer.size) + 1, static_cast<std::size_t>(layer.units)};
    case LayerKind::maxpool1d:
      if (layer.size <= 0) throw ShapeError("maxpool1d needs a positive window");
      if (in.rows < static_cast<std::size_t>(layer.size)) throw ShapeError("maxpool1d window longer than input");
      return {in.rows / static_cast<std::size_t>(layer.size), in.cols};
    case LayerKind::flatten:
      return {1, in.size()};
    case LayerKind::dense:
      if (layer.units <= 0) throw ShapeError("dense needs positive units");
      if (in.rows != 1) throw ShapeError("dense expects a flattened input");
      return {1, static_cast<std::size_t>(layer.units)};
    case LayerKind::dropout:
      if (!(layer.rate >= 0.0F && layer.rate < 1.0F)) throw ShapeError("dropout rate must be in [0, 1)");
      return in;
    case LayerKind::softmax:
      if (in.rows != 1) throw ShapeError("softmax expects a flattened input");
      return in;
  }
  throw ShapeError("unknown layer kind");
}

/// Activation shapes: element 0 is the input, element i+1 the output of layer i.
inline std::vector<Shape> activation_shapes(const ModelSpec& spec) {
  if (spec.input.size() == 0) throw ShapeError("empty input shape");
  std::vector<Shape> shapes{spec.input};
  for (const auto& layer : spec.layers) shapes.push_back(output_shape(layer, shapes.back()));
  return shapes;
}

inline std::size_t param_count(const LayerSpec& layer, Shape in) {
  switch (layer.kind) {
    case LayerKind::conv1d:
      return static_cast<std::size_t>(layer.units) * (static_cast<std::size_t>(layer.size) * in.cols + 1);
    case LayerKind::dense:
      return static_cast<std::size_t>(layer.units) * (in.size() + 1);
    default:
      return 0;
  }
}

inline std::vector<std::size_t> param_counts(const ModelSpec& spec) {
  const auto shapes = activation_shapes(spec);
  std::vector<std::size_t> counts;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) counts.push_back(param_count(spec.layers[i], shapes[i]));
  return counts;
}

inline std::size_t total_params(const ModelSpec& spec) {
  std::size_t n = 0;
  for (auto c : param_counts(spec)) n += c;
  return n;
}

/// Multiply-accumulates for one forward pass.
inline std::uint64_t mac_count(const ModelSpec& spec) {
  const auto shapes = activation_shapes(spec);
  std::uint64_t macs = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    if (l.kind == LayerKind::conv1d) {
      macs += shapes[i + 1].rows * static_cast<std::uint64_t>(l.units) * static_cast<std::uint64_t>(l.size) *
              shapes[i].cols;
    } else if (l.kind == LayerKind::dense) {
      macs += shapes[i].size() * static_cast<std::uint64_t>(l.units);
    }
  }
  return macs;
}

/// Throws ShapeError unless the spec is a 5-way classifier ending in exactly one softmax.
inline void validate_classifier(const ModelSpec& spec) {
  const auto shapes = activation_shapes(spec);
  if (spec.layers.empty() || spec.layers.back().kind != LayerKind::softmax) {
    throw ShapeError("classifier must end with softmax");
  }
  for (std::size_t i = 0; i + 1 < spec.layers.size(); ++i) {
    if (spec.layers[i].kind == LayerKind::softmax) throw ShapeError("softmax allowed only as the final layer");
  }
  if (shapes.back().size() != kNumClasses) {
    throw ShapeError("classifier emits " + std::to_string(shapes.back().size()) + " logits, expected " +
                     std::to_string(kNumClasses));
  }
}

/// conv1d(8,3) -> pool -> conv1d(16,3) -> pool -> flatten -> dropout(0.25) -> dense(5) -> softmax.
inline ModelSpec default_spec(Shape input = {61, 40}) {
  return ModelSpec{input,
                   {LayerSpec::conv1d(8, 3), LayerSpec::maxpool1d(2), LayerSpec::conv1d(16, 3),
                    LayerSpec::maxpool1d(2), LayerSpec::flatten(), LayerSpec::dropout(0.25F),
                    LayerSpec::dense(static_cast<int>(kNumClasses)), LayerSpec::softmax()}};
}

/// Per-layer flat parameters. conv1d: W[filter][tap][channel] then bias[filter];
/// dense: W[unit][input] then bias[unit]. Parameter-free layers hold empty arrays.
template <typename T>
struct Weights {
  std::vector<std::vector<T>> layers;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.size();
    return n;
  }
  friend bool operator==(const Weights&, const Weights&) = default;
};

template <typename T>
Weights<T> zero_weights(const ModelSpec& spec) {
  Weights<T> w;
  for (auto c : param_counts(spec)) w.layers.emplace_back(c, T{0});
  return w;
}

template <typename To, typename From>
Weights<To> cast_weights(const Weights<From>& w) {
  Weights<To> out;
  out.layers.reserve(w.layers.size());
  for (const auto& l : w.layers) out.layers.emplace_back(l.begin(), l.end());
  return out;
}

inline void check_weights_shape(const ModelSpec& spec, const auto& weights) {
  const auto counts = param_counts(spec);
  if (counts.size() != weights.layers.size()) throw ShapeError("weights have wrong layer count");
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] != weights.layers[i].size()) {
      throw ShapeError("layer " + std::to_string(i) + " expects " + std::to_string(counts[i]) + " parameters, got " +
                       std::to_string(weights.layers[i].size()));
    }
  }
}

/// Uniform in [0, 1) from the top 53 bits; identical across standard libraries.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// He-style uniform fan-in initialization, zero biases.
template <typename T>
Weights<T> init_weights(const ModelSpec& spec, std::uint64_t seed) {
  const auto shapes = activation_shapes(spec);
  Weights<T> w = zero_weights<T>(spec);
  std::mt19937_64 rng(derive_seed(seed, 0x1417));
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    std::size_t fan_in = 0;
    if (l.kind == LayerKind::conv1d) fan_in = static_cast<std::size_t>(l.size) * shapes[i].cols;
    if (l.kind == LayerKind::dense) fan_in = shapes[i].size();
    if (fan_in == 0) continue;
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    const std::size_t n_weights = static_cast<std::size_t>(l.units) * fan_in;
    for (std::size_t k = 0; k < n_weights; ++k) w.layers[i][k] = static_cast<T>((2.0 * uniform01(rng) - 1.0) * limit);
  }
  return w;
}

}  // namespace rubble::nn
