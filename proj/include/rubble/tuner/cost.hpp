// Device budget and an explicit RAM / ROM / latency cost model for
// (frontend, model) candidates.
//
//   ram     = feature matrix bytes + bytes of the largest pair of consecutive activations
//   rom     = 4 * params + code allowance
//   latency = (cycles_per_mac * MACs + fft_factor * frames * N log2 N) / clock
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "rubble/audio/dsp.hpp"
#include "rubble/nn/model.hpp"

namespace rubble::tuner {

struct DeviceBudget {
  std::uint64_t sram_bytes = 262144;
  std::uint64_t flash_bytes = 1048576;
  std::uint64_t clock_hz = 64'000'000;

  void validate() const {
    if (sram_bytes == 0 || flash_bytes == 0 || clock_hz == 0) throw std::invalid_argument("DeviceBudget fields must be positive");
  }
};

struct CostModel {
  double cycles_per_mac = 2.0;
  std::uint64_t code_allowance_bytes = 51200;
  double fft_factor = 30.0;
  std::uint64_t bytes_per_value = 4;
};

struct CandidateConfig {
  std::string id;
  audio::FrontendConfig frontend;
  nn::ModelSpec model;

  /// Frontend output shape equals model input shape.
  bool consistent() const { return model.input.rows == frontend.rows() && model.input.cols == frontend.cols(); }
};

struct CostEstimate {
  std::uint64_t ram_bytes = 0;
  std::uint64_t rom_bytes = 0;
  double dsp_ms = 0.0;
  double inference_ms = 0.0;
  double latency_ms = 0.0;

  bool fits(const DeviceBudget& b) const { return ram_bytes <= b.sram_bytes && rom_bytes <= b.flash_bytes; }
};

inline double dsp_latency_ms(const audio::FrontendConfig& fe, std::uint64_t clock_hz, const CostModel& cm = {}) {
  const double n = fe.frame.fft_size;
  const double frames = static_cast<double>(fe.rows());
  return cm.fft_factor * frames * n * std::log2(n) / static_cast<double>(clock_hz) * 1000.0;
}

inline double inference_latency_ms(const nn::ModelSpec& spec, std::uint64_t clock_hz, const CostModel& cm = {}) {
  return cm.cycles_per_mac * static_cast<double>(nn::mac_count(spec)) / static_cast<double>(clock_hz) * 1000.0;
}

/// Peak bytes for two live consecutive activations (input counts as activation 0).
inline std::uint64_t activation_bytes(const nn::ModelSpec& spec, const CostModel& cm = {}) {
  const auto shapes = nn::activation_shapes(spec);
  std::uint64_t peak = shapes.front().size();
  for (std::size_t i = 0; i + 1 < shapes.size(); ++i) peak = std::max<std::uint64_t>(peak, shapes[i].size() + shapes[i + 1].size());
  return peak * cm.bytes_per_value;
}

inline CostEstimate estimate_cost(const audio::FrontendConfig& fe, const nn::ModelSpec& spec, const DeviceBudget& budget,
                                  const CostModel& cm = {}) {
  budget.validate();
  CostEstimate c;
  c.ram_bytes = fe.rows() * fe.cols() * cm.bytes_per_value + activation_bytes(spec, cm);
  c.rom_bytes = cm.bytes_per_value * nn::total_params(spec) + cm.code_allowance_bytes;
  c.dsp_ms = dsp_latency_ms(fe, budget.clock_hz, cm);
  c.inference_ms = inference_latency_ms(spec, budget.clock_hz, cm);
  c.latency_ms = c.dsp_ms + c.inference_ms;
  return c;
}

inline CostEstimate estimate_cost(const CandidateConfig& cand, const DeviceBudget& budget, const CostModel& cm = {}) {
  if (!cand.consistent()) throw ShapeError("candidate '" + cand.id + "': frontend output does not match model input");
  return estimate_cost(cand.frontend, cand.model, budget, cm);
}

}  // namespace rubble::tuner
