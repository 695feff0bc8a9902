// "RSNN" model file: frontend + layer descriptors + float32 or int8 parameters.
//
//   offset  field
//   0       magic "RSNN"
//   4       u32 version (1)
//   8       u32 flags (bit 0: int8 parameters)
//   12      frontend descriptor, 32 bytes
//   44      u32 input rows, u32 input cols
//   52      u32 layer count, then 16 bytes per layer
//           (u8 kind, u8 activation, u16 0, u32 units, u32 size, f32 rate)
//   ...     u32 total parameter count
//   ...     per layer: float32 x count, or (f32 scale, i32 zero point, i8 x count)
//   end-4   u32 CRC-32 (zlib polynomial) of every preceding byte
//
// All integers and floats are little-endian.
#pragma once

#include <zlib.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "rubble/audio/dsp.hpp"
#include "rubble/nn/model.hpp"
#include "rubble/nn/quantize.hpp"

namespace rubble::nn {

inline constexpr std::uint32_t kModelFileVersion = 1;
inline constexpr std::size_t kModelHeaderBytes = 56;
inline constexpr std::size_t kLayerDescriptorBytes = 16;

class ModelFileError : public FormatError {
 public:
  using FormatError::FormatError;
};

struct ModelFile {
  audio::FrontendConfig frontend;
  ModelSpec spec;
  Weights<float> weights;                   // dequantized when the file is int8
  std::optional<QuantizedWeights> quantized;
};

/// Bytes a float32 model file occupies: header, descriptors, count, parameters, CRC.
inline std::size_t model_file_size(const ModelSpec& spec, bool int8 = false) {
  std::size_t size = kModelHeaderBytes + kLayerDescriptorBytes * spec.layers.size() + 4 + 4;
  for (auto c : param_counts(spec)) size += int8 ? (c + (c > 0 ? 8 : 0)) : 4 * c;
  return size;
}

namespace detail {

static_assert(std::endian::native == std::endian::little, "model file I/O assumes a little-endian host");

class Writer {
 public:
  template <typename V>
  void put(V v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(V));
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  template <typename V>
  V get() {
    if (pos_ + sizeof(V) > bytes_.size()) throw ModelFileError("model file truncated");
    V v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(V));
    pos_ += sizeof(V);
    return v;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
}

inline void write_header(Writer& w, const audio::FrontendConfig& fe, const ModelSpec& spec, bool int8) {
  w.bytes.insert(w.bytes.end(), {'R', 'S', 'N', 'N'});
  w.put<std::uint32_t>(kModelFileVersion);
  w.put<std::uint32_t>(int8 ? 1U : 0U);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(fe.kind));
  for (int i = 0; i < 3; ++i) w.put<std::uint8_t>(0);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(fe.sample_rate_hz));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(fe.clip_samples));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(fe.frame.frame_len));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(fe.frame.stride));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(fe.frame.fft_size));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(fe.num_filters));
  w.put<float>(static_cast<float>(fe.f_low_hz));
  w.put<float>(static_cast<float>(fe.f_high_hz));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(fe.num_coeffs));
  w.put<std::uint16_t>(0);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(spec.input.rows));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(spec.input.cols));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(spec.layers.size()));
  for (const auto& l : spec.layers) {
    w.put<std::uint8_t>(static_cast<std::uint8_t>(l.kind));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(l.activation));
    w.put<std::uint16_t>(0);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(l.units));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(l.size));
    w.put<float>(l.rate);
  }
}

inline std::vector<std::uint8_t> finish(Writer& w) {
  w.put<std::uint32_t>(crc32_of(w.bytes));
  return std::move(w.bytes);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_model(const ModelSpec& spec, const Weights<float>& weights,
                                              const audio::FrontendConfig& frontend = {}) {
  check_weights_shape(spec, weights);
  detail::Writer w;
  detail::write_header(w, frontend, spec, false);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(weights.total()));
  for (const auto& layer : weights.layers) {
    for (float v : layer) w.put<float>(v);
  }
  return detail::finish(w);
}

inline std::vector<std::uint8_t> encode_model(const ModelSpec& spec, const QuantizedWeights& weights,
                                              const audio::FrontendConfig& frontend = {}) {
  check_weights_shape(spec, dequantize(weights));
  detail::Writer w;
  detail::write_header(w, frontend, spec, true);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(weights.total()));
  for (const auto& layer : weights.layers) {
    if (layer.values.empty()) continue;
    w.put<float>(layer.scale);
    w.put<std::int32_t>(layer.zero_point);
    for (auto v : layer.values) w.put<std::int8_t>(v);
  }
  return detail::finish(w);
}

inline ModelFile decode_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "RSNN", 4) != 0) throw ModelFileError("bad magic: not an RSNN file");
  const auto body = bytes.first(bytes.size() - 4);
  std::uint32_t stored_crc = 0;
  std::memcpy(&stored_crc, bytes.data() + body.size(), 4);
  if (detail::crc32_of(body) != stored_crc) throw ModelFileError("CRC mismatch: file is corrupt or truncated");

  detail::Reader r(body);
  r.get<std::uint32_t>();  // magic
  const auto version = r.get<std::uint32_t>();
  if (version != kModelFileVersion) throw ModelFileError("unsupported RSNN version " + std::to_string(version));
  const auto flags = r.get<std::uint32_t>();
  const bool int8 = (flags & 1U) != 0;

  ModelFile out;
  auto& fe = out.frontend;
  const auto kind = r.get<std::uint8_t>();
  if (kind > 1) throw ModelFileError("unknown frontend kind");
  fe.kind = static_cast<audio::FrontendKind>(kind);
  for (int i = 0; i < 3; ++i) r.get<std::uint8_t>();
  fe.sample_rate_hz = static_cast<int>(r.get<std::uint32_t>());
  fe.clip_samples = static_cast<int>(r.get<std::uint32_t>());
  fe.frame.frame_len = r.get<std::uint16_t>();
  fe.frame.stride = r.get<std::uint16_t>();
  fe.frame.fft_size = r.get<std::uint16_t>();
  fe.num_filters = r.get<std::uint16_t>();
  fe.f_low_hz = r.get<float>();
  fe.f_high_hz = r.get<float>();
  fe.num_coeffs = r.get<std::uint16_t>();
  r.get<std::uint16_t>();

  out.spec.input.rows = r.get<std::uint32_t>();
  out.spec.input.cols = r.get<std::uint32_t>();
  const auto n_layers = r.get<std::uint32_t>();
  if (static_cast<std::size_t>(n_layers) * kLayerDescriptorBytes > r.remaining()) throw ModelFileError("layer table truncated");
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    LayerSpec l;
    const auto k = r.get<std::uint8_t>();
    if (k < 1 || k > 6) throw ModelFileError("unknown layer kind " + std::to_string(k));
    l.kind = static_cast<LayerKind>(k);
    const auto act = r.get<std::uint8_t>();
    if (act > 1) throw ModelFileError("unknown activation");
    l.activation = static_cast<Activation>(act);
    r.get<std::uint16_t>();
    l.units = static_cast<int>(r.get<std::uint32_t>());
    l.size = static_cast<int>(r.get<std::uint32_t>());
    l.rate = r.get<float>();
    out.spec.layers.push_back(l);
  }
  std::vector<std::size_t> counts;
  try {
    counts = param_counts(out.spec);
  } catch (const ShapeError& e) {
    throw ModelFileError(std::string("inconsistent layer table: ") + e.what());
  }
  const auto total = r.get<std::uint32_t>();
  std::size_t expected = 0;
  for (auto c : counts) expected += c;
  if (total != expected) throw ModelFileError("parameter count does not match layer table");

  if (int8) {
    QuantizedWeights q;
    for (auto c : counts) {
      QuantizedLayer ql;
      if (c > 0) {
        ql.scale = r.get<float>();
        ql.zero_point = r.get<std::int32_t>();
        ql.values.resize(c);
        for (auto& v : ql.values) v = r.get<std::int8_t>();
      }
      q.layers.push_back(std::move(ql));
    }
    out.weights = dequantize(q);
    out.quantized = std::move(q);
  } else {
    for (auto c : counts) {
      std::vector<float> layer(c);
      for (auto& v : layer) v = r.get<float>();
      out.weights.layers.push_back(std::move(layer));
    }
  }
  if (r.remaining() != 0) throw ModelFileError("trailing bytes after parameters");
  return out;
}

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void save_weights(const ModelSpec& spec, const Weights<float>& weights, const std::filesystem::path& path,
                         const audio::FrontendConfig& frontend = {}) {
  write_file(path, encode_model(spec, weights, frontend));
}

inline void save_weights(const ModelSpec& spec, const QuantizedWeights& weights, const std::filesystem::path& path,
                         const audio::FrontendConfig& frontend = {}) {
  write_file(path, encode_model(spec, weights, frontend));
}

inline ModelFile load_weights(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_model(bytes);
}

}  // namespace rubble::nn
