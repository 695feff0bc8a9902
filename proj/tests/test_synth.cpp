#include <cmath>
#include <filesystem>
#include <numeric>

#include <gtest/gtest.h>

#include "rubble/audio/dsp.hpp"
#include "rubble/synth/dataset.hpp"

using namespace rubble;
using namespace rubble::synth;

namespace {

// Geometric over arithmetic mean of a Welch-averaged periodogram (rectangular window, 1024 points).
double spectral_flatness(const audio::AudioClip& clip) {
  const std::size_t n = 1024;
  std::vector<double> psd(n / 2 + 1, 0.0);
  for (std::size_t start = 0; start + n <= clip.samples.size(); start += n) {
    for (std::size_t k = 1; k < psd.size(); ++k) {
      double re = 0.0, im = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        const double a = -2.0 * std::numbers::pi * static_cast<double>(k * t) / static_cast<double>(n);
        const double x = clip.samples[start + t] / 32768.0;
        re += x * std::cos(a);
        im += x * std::sin(a);
      }
      psd[k] += re * re + im * im;
    }
  }
  double log_sum = 0.0, sum = 0.0;
  for (std::size_t k = 1; k < psd.size(); ++k) {
    log_sum += std::log(psd[k]);
    sum += psd[k];
  }
  const double m = static_cast<double>(psd.size() - 1);
  return std::exp(log_sum / m) / (sum / m);
}

}  // namespace

TEST(Clip, DeterministicPerLabelAndSeed) {
  for (auto c : kAllClasses) {
    const auto a = generate_clip(c, 99);
    const auto b = generate_clip(c, 99);
    EXPECT_EQ(a.samples, b.samples);
    EXPECT_NE(a.samples, generate_clip(c, 100).samples);
    EXPECT_EQ(a.label, c);
  }
}

TEST(Clip, InvariantsHold) {
  for (auto c : kAllClasses) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto clip = generate_clip(c, seed);
      ASSERT_EQ(clip.samples.size(), 16000U);
      EXPECT_EQ(clip.sample_rate_hz, 16000);
      int peak = 0;
      for (auto s : clip.samples) peak = std::max(peak, std::abs(static_cast<int>(s)));
      EXPECT_LE(peak, static_cast<int>(std::lround(0.9 * 32767.0)));
      EXPECT_GT(peak, 0);
    }
  }
}

TEST(Clip, UnknownLabel) {
  EXPECT_THROW(generate_clip("whistle", 1), std::invalid_argument);
  EXPECT_EQ(generate_clip("hello,help", 1).samples, generate_clip(SoundClass::hello_help, 1).samples);
}

TEST(Clip, NoiseIsSpectrallyFlat) {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) EXPECT_GT(spectral_flatness(generate_clip(SoundClass::noise, seed)), 0.3);
  EXPECT_LT(spectral_flatness(generate_clip(SoundClass::hello_help, 1)), 0.3);
}

TEST(Manifest, SplitArithmetic) {
  const auto m = plan_dataset(120, 42);
  EXPECT_EQ(m.entries.size(), 600U);
  EXPECT_EQ(m.count(Split::train), 504U);
  EXPECT_EQ(m.count(Split::test), 96U);
  for (auto c : kAllClasses) {
    const auto n = std::count_if(m.entries.begin(), m.entries.end(), [c](const auto& e) { return e.label == c; });
    EXPECT_EQ(n, 120);
  }
}

TEST(Manifest, EmptyAndDeterministic) {
  EXPECT_TRUE(plan_dataset(0, 1).entries.empty());
  EXPECT_EQ(plan_dataset(20, 5), plan_dataset(20, 5));
  EXPECT_NE(plan_dataset(20, 5), plan_dataset(20, 6));
}

TEST(Manifest, FullScaleCounts) {
  const auto m = full_scale_plan(1);
  EXPECT_EQ(m.count(Split::train), 8040U);
  EXPECT_EQ(m.count(Split::test), 1608U);
}

TEST(Manifest, JsonRoundTrip) {
  const auto m = plan_dataset(7, 3);
  EXPECT_EQ(manifest_from_json(to_json(m)), m);
  EXPECT_THROW(manifest_from_json(nlohmann::json::parse(R"({"seed": 1})")), FormatError);
}

TEST(Dataset, WritesFilesAndReloads) {
  const auto dir = std::filesystem::temp_directory_path() / "rubble_synth_dataset";
  std::filesystem::remove_all(dir);
  const auto m = generate_dataset(3, 11, dir);
  EXPECT_EQ(m.entries.size(), 15U);
  for (const auto& e : m.entries) EXPECT_TRUE(std::filesystem::exists(dir / e.path)) << e.path;
  EXPECT_EQ(load_manifest(dir), m);
  const auto test = load_split(dir, m, Split::test);
  EXPECT_EQ(test.size(), m.count(Split::test));
  for (const auto& clip : test) ASSERT_TRUE(clip.label.has_value());
  std::size_t i = 0;
  for (const auto& e : m.entries) {
    if (e.split != Split::test) continue;
    EXPECT_EQ(test[i].samples, generate_clip(e.label, e.seed).samples);
    ++i;
  }
  std::filesystem::remove_all(dir);
}

TEST(Dataset, ZeroPerClassWritesOnlyManifest) {
  const auto dir = std::filesystem::temp_directory_path() / "rubble_synth_empty";
  std::filesystem::remove_all(dir);
  generate_dataset(0, 1, dir);
  std::size_t files = 0;
  for (const auto& f : std::filesystem::recursive_directory_iterator(dir)) files += f.is_regular_file() ? 1 : 0;
  EXPECT_EQ(files, 1U);
  std::filesystem::remove_all(dir);
}

TEST(Dataset, UnwritableDirectory) {
  EXPECT_THROW(generate_dataset(1, 1, "/proc/rubble_cannot_write_here"), Error);
}

TEST(Rng, NormalMoments) {
  Rng rng(5);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}
