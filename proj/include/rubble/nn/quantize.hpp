// Per-layer affine int8 quantization of float weights.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "rubble/nn/model.hpp"

namespace rubble::nn {

/// Lower bound on the step size; keeps constant layers representable.
inline constexpr float kMinQuantScale = 1e-8F;

struct QuantizedLayer {
  std::vector<std::int8_t> values;
  float scale = 1.0F;
  std::int32_t zero_point = 0;

  float dequantize(std::size_t k) const { return static_cast<float>(values[k] - zero_point) * scale; }
  friend bool operator==(const QuantizedLayer&, const QuantizedLayer&) = default;
};

struct QuantizedWeights {
  std::vector<QuantizedLayer> layers;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.values.size();
    return n;
  }
  friend bool operator==(const QuantizedWeights&, const QuantizedWeights&) = default;
};

/// The range always includes zero, so zero weights map exactly onto the zero point.
inline QuantizedLayer quantize_layer(const std::vector<float>& w) {
  QuantizedLayer q;
  q.values.resize(w.size());
  if (w.empty()) return q;
  const auto [mn, mx] = std::minmax_element(w.begin(), w.end());
  const float lo = std::min(0.0F, *mn);
  const float hi = std::max(0.0F, *mx);
  q.scale = std::max((hi - lo) / 255.0F, kMinQuantScale);
  q.zero_point = std::clamp(static_cast<std::int32_t>(std::lround(-128.0F - lo / q.scale)), -128, 127);
  for (std::size_t k = 0; k < w.size(); ++k) {
    const long v = std::lround(w[k] / q.scale) + q.zero_point;
    q.values[k] = static_cast<std::int8_t>(std::clamp<long>(v, -128, 127));
  }
  return q;
}

inline QuantizedWeights quantize(const Weights<float>& w) {
  QuantizedWeights q;
  for (const auto& l : w.layers) q.layers.push_back(quantize_layer(l));
  return q;
}

inline Weights<float> dequantize(const QuantizedWeights& q) {
  Weights<float> w;
  for (const auto& l : q.layers) {
    std::vector<float> out(l.values.size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = l.dequantize(k);
    w.layers.push_back(std::move(out));
  }
  return w;
}

}  // namespace rubble::nn
