// Clip -> features -> probabilities, shared by the CLI, simulator and tuner.
#pragma once

#include <chrono>
#include <cmath>
#include <span>
#include <vector>

#include "rubble/audio/dsp.hpp"
#include "rubble/nn/network.hpp"
#include "rubble/nn/serialize.hpp"
#include "rubble/telemetry/codec.hpp"

namespace rubble {

inline std::vector<nn::LabeledFeatures> featurize(std::span<const audio::AudioClip> clips, const audio::FeatureExtractor& fx) {
  std::vector<nn::LabeledFeatures> out;
  out.reserve(clips.size());
  for (const auto& clip : clips) {
    if (!clip.label) throw std::invalid_argument("featurize: clip has no label");
    out.push_back({fx(clip), *clip.label});
  }
  return out;
}

/// First `samples` samples of a clip; throws ClipTooShort when it is shorter.
inline audio::AudioClip leading_window(const audio::AudioClip& clip, std::size_t samples) {
  if (clip.samples.size() < samples) {
    throw audio::ClipTooShort("clip has " + std::to_string(clip.samples.size()) + " samples, the model needs " +
                              std::to_string(samples));
  }
  audio::AudioClip out = clip;
  out.samples.resize(samples);
  return out;
}

struct TimedProbabilities {
  nn::Probabilities probabilities{};
  double dsp_ms = 0.0;
  double classification_ms = 0.0;
};

/// A trained model bound to its frontend.
class Classifier {
 public:
  Classifier(audio::FrontendConfig frontend, nn::ModelSpec spec, nn::Weights<float> weights)
      : extractor_(frontend), spec_(std::move(spec)), weights_(std::move(weights)) {
    nn::validate_classifier(spec_);
    nn::check_weights_shape(spec_, weights_);
    if (spec_.input.rows != frontend.rows() || spec_.input.cols != frontend.cols()) {
      throw ShapeError("model input does not match frontend output");
    }
  }
  explicit Classifier(const nn::ModelFile& file) : Classifier(file.frontend, file.spec, file.weights) {}

  static Classifier load(const std::filesystem::path& path) { return Classifier(nn::load_weights(path)); }

  const audio::FrontendConfig& frontend() const { return extractor_.config(); }
  const nn::ModelSpec& spec() const { return spec_; }
  const nn::Weights<float>& weights() const { return weights_; }

  nn::Probabilities operator()(const audio::AudioClip& clip) const { return nn::forward<float>(spec_, weights_, extractor_(clip)); }

  /// Wall-clock timed featurize + forward.
  TimedProbabilities timed(const audio::AudioClip& clip) const {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    const auto features = extractor_(clip);
    const auto t1 = clock::now();
    TimedProbabilities r;
    r.probabilities = nn::forward<float>(spec_, weights_, features);
    const auto t2 = clock::now();
    r.dsp_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    r.classification_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();
    return r;
  }

  telemetry::PredictionBlock predict_block(const audio::AudioClip& clip, std::int64_t timestamp_ms = 0) const {
    const auto t = timed(clip);
    telemetry::PredictionBlock b;
    b.dsp_ms = static_cast<int>(std::lround(t.dsp_ms));
    b.classification_ms = static_cast<int>(std::lround(t.classification_ms));
    b.probabilities = t.probabilities;
    b.timestamp_ms = timestamp_ms;
    return b;
  }

 private:
  audio::FeatureExtractor extractor_;
  nn::ModelSpec spec_;
  nn::Weights<float> weights_;
};

}  // namespace rubble
