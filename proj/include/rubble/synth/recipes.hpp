// Parametric synthesis of the five sound classes.
//
// Every clip is 1 s at 16 kHz, deterministic in (label, seed), peak-normalized
// to at most 0.9 full scale, and carries a faint white background floor.
// Breaths and muffled words are both shaped with a 2-3 kHz emphasis; that
// overlap is what makes them the hardest pair to separate.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "rubble/audio/dsp.hpp"
#include "rubble/core.hpp"

namespace rubble::synth {

inline constexpr double kSampleRate = audio::kDefaultSampleRate;
inline constexpr std::size_t kClipSamples = audio::kDefaultSampleRate;
inline constexpr double kMaxPeak = 0.9;

/// Seeded source of uniform and normal variates with portable output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int integer(int lo, int hi) { return lo + static_cast<int>(uniform() * (hi - lo + 1)); }
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// RBJ-cookbook biquad, direct form I.
class Biquad {
 public:
  static Biquad lowpass(double fc, double q = std::numbers::sqrt2 / 2) { return make(0, fc, q, 0.0); }
  static Biquad highpass(double fc, double q = std::numbers::sqrt2 / 2) { return make(1, fc, q, 0.0); }
  static Biquad bandpass(double fc, double q) { return make(2, fc, q, 0.0); }
  static Biquad peaking(double fc, double q, double gain_db) { return make(3, fc, q, gain_db); }

  double operator()(double x) {
    const double y = b0_ * x + b1_ * x1_ + b2_ * x2_ - a1_ * y1_ - a2_ * y2_;
    x2_ = x1_;
    x1_ = x;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

  void process(std::vector<double>& s) {
    for (auto& v : s) v = (*this)(v);
  }

 private:
  static Biquad make(int type, double fc, double q, double gain_db) {
    const double w0 = 2.0 * std::numbers::pi * fc / kSampleRate;
    const double cw = std::cos(w0), sw = std::sin(w0);
    const double alpha = sw / (2.0 * q);
    const double a = std::pow(10.0, gain_db / 40.0);
    double b0 = 0, b1 = 0, b2 = 0, a0 = 1, a1 = 0, a2 = 0;
    switch (type) {
      case 0:
        b0 = (1 - cw) / 2; b1 = 1 - cw; b2 = (1 - cw) / 2;
        a0 = 1 + alpha; a1 = -2 * cw; a2 = 1 - alpha;
        break;
      case 1:
        b0 = (1 + cw) / 2; b1 = -(1 + cw); b2 = (1 + cw) / 2;
        a0 = 1 + alpha; a1 = -2 * cw; a2 = 1 - alpha;
        break;
      case 2:
        b0 = alpha; b1 = 0; b2 = -alpha;
        a0 = 1 + alpha; a1 = -2 * cw; a2 = 1 - alpha;
        break;
      default:
        b0 = 1 + alpha * a; b1 = -2 * cw; b2 = 1 - alpha * a;
        a0 = 1 + alpha / a; a1 = -2 * cw; a2 = 1 - alpha / a;
        break;
    }
    Biquad f;
    f.b0_ = b0 / a0; f.b1_ = b1 / a0; f.b2_ = b2 / a0;
    f.a1_ = a1 / a0; f.a2_ = a2 / a0;
    return f;
  }

  double b0_ = 1, b1_ = 0, b2_ = 0, a1_ = 0, a2_ = 0;
  double x1_ = 0, x2_ = 0, y1_ = 0, y2_ = 0;
};

namespace detail {

inline std::vector<double> white(Rng& rng, std::size_t n) {
  std::vector<double> s(n);
  for (auto& v : s) v = rng.normal();
  return s;
}

/// Pink noise via Paul Kellet's economy filter.
inline std::vector<double> pink(Rng& rng, std::size_t n) {
  std::vector<double> s(n);
  double b0 = 0, b1 = 0, b2 = 0;
  for (auto& v : s) {
    const double w = rng.normal();
    b0 = 0.99765 * b0 + w * 0.0990460;
    b1 = 0.96300 * b1 + w * 0.2965164;
    b2 = 0.57000 * b2 + w * 1.0526913;
    v = (b0 + b1 + b2 + w * 0.1848) * 0.25;
  }
  return s;
}

inline double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

/// Raised-cosine burst: 0 outside [start, start + len], 1 in the middle.
inline double burst(double t, double start, double len, double ramp) {
  if (t < start || t > start + len) return 0.0;
  const double up = smoothstep((t - start) / ramp);
  const double down = smoothstep((start + len - t) / ramp);
  return std::min(up, down);
}

/// Harmonic source with a slowly wandering f0; harmonics above `max_hz` are skipped.
inline std::vector<double> harmonic_train(Rng& rng, std::size_t n, double f0_lo, double f0_hi, double max_hz,
                                          double rolloff) {
  const double f0_start = rng.uniform(f0_lo, f0_hi);
  const double f0_end = std::clamp(f0_start * rng.uniform(0.85, 1.15), f0_lo * 0.8, f0_hi * 1.2);
  const double vib_rate = rng.uniform(3.0, 6.0), vib_depth = rng.uniform(0.005, 0.02);
  std::vector<double> amp(static_cast<std::size_t>(max_hz / (f0_lo * 0.8)) + 2);
  for (std::size_t h = 1; h < amp.size(); ++h) amp[h] = 1.0 / std::pow(static_cast<double>(h), rolloff);
  std::vector<double> s(n, 0.0);
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kSampleRate;
    const double f0 = (f0_start + (f0_end - f0_start) * t) * (1.0 + vib_depth * std::sin(2 * std::numbers::pi * vib_rate * t));
    phase += 2.0 * std::numbers::pi * f0 / kSampleRate;
    if (phase > 2.0 * std::numbers::pi * 1024) phase -= 2.0 * std::numbers::pi * 1024;
    double acc = 0.0;
    const int n_harm = std::min(static_cast<int>(max_hz / f0), static_cast<int>(amp.size()) - 1);
    for (int h = 1; h <= n_harm; ++h) acc += std::sin(h * phase) * amp[static_cast<std::size_t>(h)];
    s[i] = acc;
  }
  return s;
}

inline double peak_of(const std::vector<double>& s) {
  double p = 0.0;
  for (double v : s) p = std::max(p, std::abs(v));
  return p;
}

inline void normalize_peak(std::vector<double>& s, double target) {
  const double p = peak_of(s);
  if (p > 0.0) {
    for (auto& v : s) v *= target / p;
  }
}

/// Pink noise band-limited to 300-3000 Hz with a 2-3 kHz resonance.
inline std::vector<double> breathy_noise(Rng& rng, std::size_t n, double emphasis_db) {
  auto s = detail::pink(rng, n);
  Biquad hp = Biquad::highpass(300.0), lp1 = Biquad::lowpass(3000.0), lp2 = Biquad::lowpass(3000.0);
  Biquad emph = Biquad::peaking(rng.uniform(2100.0, 2900.0), 1.4, emphasis_db);
  hp.process(s);
  lp1.process(s);
  lp2.process(s);
  emph.process(s);
  return s;
}

inline void apply_envelope(std::vector<double>& s, const std::vector<std::pair<double, double>>& bursts,
                           const std::vector<double>& gains, double ramp) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double t = static_cast<double>(i) / kSampleRate;
    double env = 0.0;
    for (std::size_t b = 0; b < bursts.size(); ++b) {
      env = std::max(env, gains[b] * burst(t, bursts[b].first, bursts[b].second, ramp));
    }
    s[i] *= env;
  }
}

}  // namespace detail

/// Inhale/exhale swells of band-limited noise.
inline std::vector<double> breath_signal(Rng& rng) {
  auto s = detail::breathy_noise(rng, kClipSamples, rng.uniform(8.0, 12.0));
  const int phases = 2 * rng.integer(1, 2);
  std::vector<std::pair<double, double>> bursts;
  std::vector<double> gains;
  double t0 = rng.uniform(0.0, 0.12);
  for (int c = 0; c < phases; ++c) {
    const double len = phases == 2 ? rng.uniform(0.3, 0.45) : rng.uniform(0.18, 0.24);
    bursts.emplace_back(t0, len);
    gains.push_back(c % 2 == 0 ? 1.0 : rng.uniform(0.5, 0.9));
    t0 += len + rng.uniform(0.01, 0.06);
  }
  detail::apply_envelope(s, bursts, gains, 0.1);
  return s;
}

/// Low-passed voiced syllables with a 2-3 kHz emphasis plus aspiration noise.
inline std::vector<double> muffled_words_signal(Rng& rng) {
  const std::size_t n = kClipSamples;
  auto voiced = detail::harmonic_train(rng, n, 100.0, 200.0, 3000.0, 0.6);
  Biquad lp1 = Biquad::lowpass(3000.0), lp2 = Biquad::lowpass(3000.0);
  Biquad emph = Biquad::peaking(rng.uniform(2200.0, 2800.0), 1.0, 14.0);
  Biquad hp = Biquad::highpass(250.0);
  lp1.process(voiced);
  lp2.process(voiced);
  emph.process(voiced);
  hp.process(voiced);
  auto breathy = detail::breathy_noise(rng, n, 10.0);
  const double voicing = rng.uniform(0.2, 1.0);
  const double pv = detail::peak_of(voiced), pb = detail::peak_of(breathy);
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = voicing * voiced[i] / pv + (1.0 - voicing) * 0.8 * breathy[i] / pb;

  const int syllables = rng.integer(2, 4);
  std::vector<std::pair<double, double>> bursts;
  std::vector<double> gains;
  double t0 = rng.uniform(0.02, 0.15);
  for (int k = 0; k < syllables && t0 < 0.9; ++k) {
    const double len = rng.uniform(0.14, 0.26);
    bursts.emplace_back(t0, len);
    gains.push_back(rng.uniform(0.6, 1.0));
    t0 += len + rng.uniform(0.03, 0.1);
  }
  detail::apply_envelope(s, bursts, gains, 0.04);
  return s;
}

/// "hel-lo" / "help": two voiced bursts, f0 180-260 Hz, vowel-like formants.
inline std::vector<double> hello_help_signal(Rng& rng) {
  const std::size_t n = kClipSamples;
  auto s = detail::harmonic_train(rng, n, 180.0, 260.0, 5000.0, 1.0);
  Biquad f1 = Biquad::peaking(rng.uniform(500.0, 800.0), 2.0, 12.0);
  Biquad f2 = Biquad::peaking(rng.uniform(1200.0, 1900.0), 3.0, 9.0);
  Biquad hp = Biquad::highpass(120.0);
  f1.process(s);
  f2.process(s);
  hp.process(s);
  const double a = rng.uniform(0.05, 0.2);
  const double len1 = rng.uniform(0.3, 0.42);
  const double gap = rng.uniform(0.08, 0.18);
  const double len2 = rng.uniform(0.22, 0.34);
  detail::apply_envelope(s, {{a, len1}, {a + len1 + gap, len2}}, {1.0, rng.uniform(0.7, 1.0)}, 0.03);
  return s;
}

/// One or two broadband transients, each at most 100 ms.
inline std::vector<double> cough_signal(Rng& rng) {
  const std::size_t n = kClipSamples;
  auto noise = detail::white(rng, n);
  Biquad hp = Biquad::highpass(150.0);
  Biquad body = Biquad::peaking(rng.uniform(600.0, 1500.0), 1.0, rng.uniform(3.0, 8.0));
  hp.process(noise);
  body.process(noise);
  std::vector<double> s(n, 0.0);
  const int coughs = rng.uniform() < 0.35 ? 2 : 1;
  double start = rng.uniform(0.05, 0.5);
  for (int c = 0; c < coughs; ++c) {
    const double attack = rng.uniform(0.003, 0.008);
    const double tau = rng.uniform(0.015, 0.03);
    const double gain = c == 0 ? 1.0 : rng.uniform(0.4, 0.8);
    const auto first = static_cast<std::size_t>(start * kSampleRate);
    const auto len = static_cast<std::size_t>(0.1 * kSampleRate);
    for (std::size_t i = 0; i < len && first + i < n; ++i) {
      const double t = static_cast<double>(i) / kSampleRate;
      const double env = t < attack ? t / attack : std::exp(-(t - attack) / tau);
      s[first + i] += gain * env * noise[first + i];
    }
    start += rng.uniform(0.2, 0.35);
  }
  return s;
}

/// Stationary mostly-white noise.
inline std::vector<double> noise_signal(Rng& rng) {
  const std::size_t n = kClipSamples;
  auto s = detail::white(rng, n);
  auto p = detail::pink(rng, n);
  const double pink_mix = rng.uniform(0.0, 0.5);
  for (std::size_t i = 0; i < n; ++i) s[i] += pink_mix * 4.0 * p[i];
  return s;
}

/// Deterministic 1 s clip for (label, seed).
inline audio::AudioClip generate_clip(SoundClass label, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xc11b, index_of(label) + 1));
  std::vector<double> s;
  switch (label) {
    case SoundClass::breathes: s = breath_signal(rng); break;
    case SoundClass::cough: s = cough_signal(rng); break;
    case SoundClass::hello_help: s = hello_help_signal(rng); break;
    case SoundClass::muffled_words: s = muffled_words_signal(rng); break;
    case SoundClass::noise: s = noise_signal(rng); break;
  }
  const double level = rng.uniform(0.25, 0.85);
  detail::normalize_peak(s, level);
  const double floor_sigma = level * std::pow(10.0, -rng.uniform(35.0, 45.0) / 20.0);
  for (auto& v : s) v += floor_sigma * rng.normal();
  if (detail::peak_of(s) > kMaxPeak) detail::normalize_peak(s, kMaxPeak);

  audio::AudioClip clip;
  clip.label = label;
  clip.samples.resize(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    clip.samples[i] = static_cast<std::int16_t>(std::lround(std::clamp(s[i], -1.0, 1.0) * 32767.0));
  }
  return clip;
}

inline audio::AudioClip generate_clip(std::string_view label, std::uint64_t seed) {
  const auto c = parse_class(label);
  if (!c) throw std::invalid_argument("unknown sound class '" + std::string(label) + "'");
  return generate_clip(*c, seed);
}

}  // namespace rubble::synth
