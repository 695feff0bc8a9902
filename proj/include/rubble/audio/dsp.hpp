// Feature extraction frontend: framing, Hamming-windowed power spectrum,
// Mel filterbank energies (MFE) and MFCC.
//
// Samples are scaled to [-1, 1) by 1/32768 before framing. MFE entries are
// log10 energies floored at 1e-12, MFCC is the orthonormal DCT-II of an MFE row.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rubble/core.hpp"

namespace rubble::audio {

inline constexpr int kDefaultSampleRate = 16000;
inline constexpr double kLogFloor = 1e-12;

struct AudioClip {
  std::vector<std::int16_t> samples;
  int sample_rate_hz = kDefaultSampleRate;
  std::optional<SoundClass> label;

  std::size_t size() const { return samples.size(); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate_hz; }
};

class ClipTooShort : public Error {
 public:
  using Error::Error;
};

struct FrameConfig {
  int frame_len = 512;
  int stride = 256;
  int fft_size = 512;

  void validate() const {
    const bool pow2 = fft_size > 0 && (fft_size & (fft_size - 1)) == 0;
    if (!(stride > 0 && stride <= frame_len && frame_len <= fft_size) || !pow2) {
      throw std::invalid_argument("FrameConfig requires 0 < stride <= frame_len <= fft_size, fft_size a power of two");
    }
  }
  friend bool operator==(const FrameConfig&, const FrameConfig&) = default;
};

/// floor((n - frame_len) / stride) + 1, or 0 when the signal is shorter than a frame.
constexpr std::size_t frame_count(std::size_t n, const FrameConfig& cfg) {
  if (n < static_cast<std::size_t>(cfg.frame_len)) return 0;
  return (n - static_cast<std::size_t>(cfg.frame_len)) / static_cast<std::size_t>(cfg.stride) + 1;
}

inline std::vector<double> to_unit_scale(std::span<const std::int16_t> pcm) {
  std::vector<double> out(pcm.size());
  std::transform(pcm.begin(), pcm.end(), out.begin(),
                 [](std::int16_t s) { return static_cast<double>(s) / 32768.0; });
  return out;
}

inline std::vector<std::vector<double>> frame_signal(std::span<const double> signal, const FrameConfig& cfg) {
  cfg.validate();
  if (signal.size() < static_cast<std::size_t>(cfg.frame_len)) {
    throw ClipTooShort("signal has " + std::to_string(signal.size()) + " samples, frame needs " +
                       std::to_string(cfg.frame_len));
  }
  const std::size_t n = frame_count(signal.size(), cfg);
  std::vector<std::vector<double>> frames;
  frames.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    auto first = signal.begin() + static_cast<std::ptrdiff_t>(t * static_cast<std::size_t>(cfg.stride));
    frames.emplace_back(first, first + cfg.frame_len);
  }
  return frames;
}

inline std::vector<std::vector<double>> frame_signal(const AudioClip& clip, const FrameConfig& cfg) {
  const auto scaled = to_unit_scale(clip.samples);
  return frame_signal(std::span<const double>(scaled), cfg);
}

/// Symmetric Hamming window.
inline std::vector<double> hamming_window(int length) {
  std::vector<double> w(static_cast<std::size_t>(length), 1.0);
  if (length == 1) return w;
  for (int n = 0; n < length; ++n) {
    w[static_cast<std::size_t>(n)] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / (length - 1));
  }
  return w;
}

/// In-place iterative radix-2 FFT with precomputed twiddles.
class Fft {
 public:
  explicit Fft(int size) : size_(static_cast<std::size_t>(size)), rev_(size_), twiddle_(size_ / 2) {
    if (size <= 0 || (size & (size - 1)) != 0) throw std::invalid_argument("FFT size must be a power of two");
    int bits = 0;
    while ((std::size_t{1} << bits) < size_) ++bits;
    for (std::size_t i = 0; i < size_; ++i) {
      std::size_t r = 0;
      for (int b = 0; b < bits; ++b) r |= ((i >> b) & 1U) << (bits - 1 - b);
      rev_[i] = r;
    }
    for (std::size_t k = 0; k < size_ / 2; ++k) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(size_);
      twiddle_[k] = {std::cos(angle), std::sin(angle)};
    }
  }

  std::size_t size() const { return size_; }

  void transform(std::vector<std::complex<double>>& data) const {
    if (data.size() != size_) throw std::invalid_argument("FFT buffer size mismatch");
    for (std::size_t i = 0; i < size_; ++i) {
      if (i < rev_[i]) std::swap(data[i], data[rev_[i]]);
    }
    for (std::size_t len = 2; len <= size_; len <<= 1) {
      const std::size_t half = len / 2;
      const std::size_t step = size_ / len;
      for (std::size_t start = 0; start < size_; start += len) {
        for (std::size_t j = 0; j < half; ++j) {
          const auto t = data[start + j + half] * twiddle_[j * step];
          data[start + j + half] = data[start + j] - t;
          data[start + j] += t;
        }
      }
    }
  }

 private:
  std::size_t size_;
  std::vector<std::size_t> rev_;
  std::vector<std::complex<double>> twiddle_;
};

/// |FFT(window * zero-padded frame)|^2 for bins 0..fft_size/2.
class PowerSpectrum {
 public:
  explicit PowerSpectrum(const FrameConfig& cfg) : cfg_(cfg), fft_((cfg.validate(), cfg.fft_size)),
                                                   window_(hamming_window(cfg.frame_len)) {}

  std::size_t bins() const { return static_cast<std::size_t>(cfg_.fft_size / 2 + 1); }
  const FrameConfig& config() const { return cfg_; }

  std::vector<double> operator()(std::span<const double> frame) const {
    if (frame.size() != static_cast<std::size_t>(cfg_.frame_len)) {
      throw ShapeError("frame length " + std::to_string(frame.size()) + " != frame_len " +
                       std::to_string(cfg_.frame_len));
    }
    std::vector<std::complex<double>> buf(static_cast<std::size_t>(cfg_.fft_size));
    for (std::size_t i = 0; i < frame.size(); ++i) buf[i] = frame[i] * window_[i];
    fft_.transform(buf);
    std::vector<double> power(bins());
    for (std::size_t k = 0; k < power.size(); ++k) power[k] = std::norm(buf[k]);
    return power;
  }

 private:
  FrameConfig cfg_;
  Fft fft_;
  std::vector<double> window_;
};

inline std::vector<double> power_spectrum(std::span<const double> frame, const FrameConfig& cfg) {
  return PowerSpectrum(cfg)(frame);
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular unit-peak filters whose edges are equally spaced on the mel scale.
/// Filter m spans edges[m]..edges[m+2] with its peak at edges[m+1].
class MelFilterbank {
 public:
  MelFilterbank(int sample_rate, int fft_size, int num_filters, double f_low, double f_high)
      : sample_rate_(sample_rate), fft_size_(fft_size), num_filters_(num_filters), f_low_(f_low), f_high_(f_high) {
    if (!(f_low >= 0.0 && f_low < f_high && f_high <= sample_rate / 2.0)) {
      throw std::invalid_argument("mel band edges must satisfy 0 <= f_low < f_high <= rate/2");
    }
    if (num_filters < 1) throw std::invalid_argument("num_filters must be >= 1");
    if (fft_size <= 0 || (fft_size & (fft_size - 1)) != 0) throw std::invalid_argument("fft_size must be a power of two");

    const double mel_lo = hz_to_mel(f_low);
    const double mel_hi = hz_to_mel(f_high);
    const auto n_edges = static_cast<std::size_t>(num_filters + 2);
    edges_mel_.resize(n_edges);
    edges_hz_.resize(n_edges);
    for (std::size_t i = 0; i < n_edges; ++i) {
      edges_mel_[i] = mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(n_edges - 1);
      edges_hz_[i] = mel_to_hz(edges_mel_[i]);
    }
    edges_hz_.front() = f_low;
    edges_hz_.back() = f_high;

    const std::size_t bins = static_cast<std::size_t>(fft_size / 2 + 1);
    weights_.assign(static_cast<std::size_t>(num_filters) * bins, 0.0);
    for (std::size_t m = 0; m < static_cast<std::size_t>(num_filters); ++m) {
      const double lo = edges_hz_[m], mid = edges_hz_[m + 1], hi = edges_hz_[m + 2];
      bool any = false;
      for (std::size_t k = 0; k < bins; ++k) {
        const double f = bin_hz(k);
        double w = 0.0;
        if (f > lo && f <= mid) {
          w = (f - lo) / (mid - lo);
        } else if (f > mid && f < hi) {
          w = (hi - f) / (hi - mid);
        }
        weights_[m * bins + k] = w;
        any = any || w > 0.0;
      }
      if (!any) {
        throw std::invalid_argument("mel filter " + std::to_string(m) + " covers no FFT bin; raise fft_size or lower num_filters");
      }
    }
  }

  int num_filters() const { return num_filters_; }
  int fft_size() const { return fft_size_; }
  int sample_rate() const { return sample_rate_; }
  double f_low() const { return f_low_; }
  double f_high() const { return f_high_; }
  std::size_t bins() const { return static_cast<std::size_t>(fft_size_ / 2 + 1); }

  double bin_hz(std::size_t k) const { return static_cast<double>(k) * sample_rate_ / fft_size_; }

  /// num_filters + 2 band edges in Hz; edges[m + 1] is the center of filter m.
  std::span<const double> edges_hz() const { return edges_hz_; }
  std::span<const double> edges_mel() const { return edges_mel_; }
  double center_hz(int m) const { return edges_hz_[static_cast<std::size_t>(m) + 1]; }

  double weight(int m, std::size_t k) const { return weights_[static_cast<std::size_t>(m) * bins() + k]; }
  std::span<const double> row(int m) const {
    return std::span<const double>(weights_).subspan(static_cast<std::size_t>(m) * bins(), bins());
  }

  std::vector<double> apply(std::span<const double> power) const {
    if (power.size() != bins()) throw ShapeError("power spectrum has wrong bin count");
    std::vector<double> energies(static_cast<std::size_t>(num_filters_), 0.0);
    for (int m = 0; m < num_filters_; ++m) {
      const auto r = row(m);
      double acc = 0.0;
      for (std::size_t k = 0; k < r.size(); ++k) acc += r[k] * power[k];
      energies[static_cast<std::size_t>(m)] = acc;
    }
    return energies;
  }

 private:
  int sample_rate_;
  int fft_size_;
  int num_filters_;
  double f_low_;
  double f_high_;
  std::vector<double> edges_mel_;
  std::vector<double> edges_hz_;
  std::vector<double> weights_;
};

inline MelFilterbank build_mel_filterbank(int sample_rate, int fft_size, int num_filters, double f_low, double f_high) {
  return MelFilterbank(sample_rate, fft_size, num_filters, f_low, f_high);
}

/// Row-major frames x coefficients.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return std::span<const double>(values).subspan(r * cols, cols); }

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;
};

inline FeatureMatrix mfe(std::span<const double> signal, const FrameConfig& cfg, const MelFilterbank& bank) {
  if (bank.fft_size() != cfg.fft_size) throw std::invalid_argument("filterbank fft_size differs from frame config");
  const auto frames = frame_signal(signal, cfg);
  const PowerSpectrum spectrum(cfg);
  FeatureMatrix out(frames.size(), static_cast<std::size_t>(bank.num_filters()));
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto energies = bank.apply(spectrum(frames[t]));
    for (std::size_t m = 0; m < energies.size(); ++m) out.at(t, m) = std::log10(std::max(kLogFloor, energies[m]));
  }
  return out;
}

inline FeatureMatrix mfe(const AudioClip& clip, const FrameConfig& cfg, const MelFilterbank& bank) {
  const auto scaled = to_unit_scale(clip.samples);
  return mfe(std::span<const double>(scaled), cfg, bank);
}

/// Orthonormal DCT-II basis, n_out x n_in, row-major.
inline std::vector<double> dct_matrix(std::size_t n_in, std::size_t n_out) {
  std::vector<double> m(n_out * n_in);
  const double n = static_cast<double>(n_in);
  for (std::size_t k = 0; k < n_out; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (std::size_t i = 0; i < n_in; ++i) {
      m[k * n_in + i] =
          scale * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * static_cast<double>(i) + 1.0) / (2.0 * n));
    }
  }
  return m;
}

inline FeatureMatrix dct_rows(const FeatureMatrix& log_mel, std::size_t num_coeffs) {
  if (num_coeffs > log_mel.cols) {
    throw std::invalid_argument("num_coeffs (" + std::to_string(num_coeffs) + ") exceeds num_filters (" +
                                std::to_string(log_mel.cols) + ")");
  }
  const auto basis = dct_matrix(log_mel.cols, num_coeffs);
  FeatureMatrix out(log_mel.rows, num_coeffs);
  for (std::size_t t = 0; t < log_mel.rows; ++t) {
    const auto in = log_mel.row(t);
    for (std::size_t k = 0; k < num_coeffs; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < in.size(); ++i) acc += basis[k * log_mel.cols + i] * in[i];
      out.at(t, k) = acc;
    }
  }
  return out;
}

inline FeatureMatrix mfcc(const AudioClip& clip, const FrameConfig& cfg, const MelFilterbank& bank,
                          std::size_t num_coeffs = 13) {
  if (num_coeffs > static_cast<std::size_t>(bank.num_filters())) {
    throw std::invalid_argument("num_coeffs exceeds num_filters");
  }
  return dct_rows(mfe(clip, cfg, bank), num_coeffs);
}

enum class FrontendKind : std::uint8_t { mfe = 0, mfcc = 1 };

inline std::string_view to_string(FrontendKind k) { return k == FrontendKind::mfe ? "mfe" : "mfcc"; }

/// Everything needed to turn a clip into classifier input.
/// MFCC frontends drop coefficient 0, which makes them invariant to input gain.
struct FrontendConfig {
  FrontendKind kind = FrontendKind::mfe;
  int sample_rate_hz = kDefaultSampleRate;
  int clip_samples = kDefaultSampleRate;
  FrameConfig frame{};
  int num_filters = 40;
  double f_low_hz = 300.0;
  double f_high_hz = 8000.0;
  int num_coeffs = 13;

  std::size_t rows() const { return frame_count(static_cast<std::size_t>(clip_samples), frame); }
  std::size_t cols() const {
    return kind == FrontendKind::mfe ? static_cast<std::size_t>(num_filters)
                                     : static_cast<std::size_t>(std::max(num_coeffs - 1, 0));
  }

  void validate() const {
    frame.validate();
    if (clip_samples < frame.frame_len) throw std::invalid_argument("clip shorter than one frame");
    if (kind == FrontendKind::mfcc && (num_coeffs < 2 || num_coeffs > num_filters)) {
      throw std::invalid_argument("MFCC needs 2 <= num_coeffs <= num_filters");
    }
  }
  friend bool operator==(const FrontendConfig&, const FrontendConfig&) = default;
};

/// Caches the filterbank and window for repeated clips.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(FrontendConfig cfg)
      : cfg_((cfg.validate(), cfg)),
        bank_(cfg.sample_rate_hz, cfg.frame.fft_size, cfg.num_filters, cfg.f_low_hz, cfg.f_high_hz),
        spectrum_(cfg.frame) {
    if (cfg_.kind == FrontendKind::mfcc) {
      basis_ = dct_matrix(static_cast<std::size_t>(cfg_.num_filters), static_cast<std::size_t>(cfg_.num_coeffs));
    }
  }

  const FrontendConfig& config() const { return cfg_; }
  const MelFilterbank& filterbank() const { return bank_; }

  FeatureMatrix operator()(const AudioClip& clip) const {
    if (clip.sample_rate_hz != cfg_.sample_rate_hz) throw std::invalid_argument("clip sample rate differs from frontend");
    const auto scaled = to_unit_scale(clip.samples);
    return (*this)(std::span<const double>(scaled));
  }

  FeatureMatrix operator()(std::span<const double> signal) const {
    const auto frames = frame_signal(signal, cfg_.frame);
    const auto filters = static_cast<std::size_t>(cfg_.num_filters);
    FeatureMatrix log_mel(frames.size(), filters);
    for (std::size_t t = 0; t < frames.size(); ++t) {
      const auto energies = bank_.apply(spectrum_(frames[t]));
      for (std::size_t m = 0; m < filters; ++m) log_mel.at(t, m) = std::log10(std::max(kLogFloor, energies[m]));
    }
    if (cfg_.kind == FrontendKind::mfe) return log_mel;

    const auto coeffs = static_cast<std::size_t>(cfg_.num_coeffs);
    FeatureMatrix out(log_mel.rows, coeffs - 1);
    for (std::size_t t = 0; t < log_mel.rows; ++t) {
      const auto in = log_mel.row(t);
      for (std::size_t k = 1; k < coeffs; ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i < filters; ++i) acc += basis_[k * filters + i] * in[i];
        out.at(t, k - 1) = acc;
      }
    }
    return out;
  }

 private:
  FrontendConfig cfg_;
  MelFilterbank bank_;
  PowerSpectrum spectrum_;
  std::vector<double> basis_;
};

}  // namespace rubble::audio
