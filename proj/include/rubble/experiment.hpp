// End-to-end runs: synthesize a dataset, train the classifier, score held-out clips.
#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "rubble/metrics/confusion.hpp"
#include "rubble/nn/train.hpp"
#include "rubble/pipeline.hpp"
#include "rubble/synth/dataset.hpp"

namespace rubble {

/// Generates one split of a planned dataset in memory.
inline std::vector<audio::AudioClip> synthesize_split(const synth::DatasetManifest& m, synth::Split split) {
  std::vector<audio::AudioClip> clips;
  for (const auto& e : m.entries) {
    if (e.split == split) clips.push_back(synth::generate_clip(e.label, e.seed));
  }
  return clips;
}

struct TrainedModel {
  audio::FrontendConfig frontend;
  nn::ModelSpec spec;
  nn::Weights<double> weights;
  std::vector<nn::EpochStats> history;

  Classifier classifier() const { return {frontend, spec, nn::cast_weights<float>(weights)}; }
};

/// Default architecture sized for the frontend.
inline nn::ModelSpec default_spec_for(const audio::FrontendConfig& fe) { return nn::default_spec({fe.rows(), fe.cols()}); }

inline TrainedModel train_model(std::span<const audio::AudioClip> clips, const audio::FrontendConfig& fe, const nn::TrainConfig& cfg,
                                std::optional<nn::ModelSpec> spec = std::nullopt) {
  const audio::FeatureExtractor fx(fe);
  const auto data = featurize(clips, fx);
  TrainedModel m{fe, spec.value_or(default_spec_for(fe)), {}, {}};
  auto fitted = nn::fit(m.spec, data, cfg);
  m.weights = std::move(fitted.weights);
  m.history = std::move(fitted.history);
  return m;
}

struct Evaluation {
  metrics::ConfusionMatrix decisions;  // thresholded, with an uncertain column
  metrics::ConfusionMatrix argmax;     // top class always
  double argmax_accuracy = 0.0;
  double decision_accuracy = 0.0;
};

inline Evaluation evaluate_model(const Classifier& model, std::span<const audio::AudioClip> clips,
                                 double threshold = nn::kDefaultThreshold) {
  std::vector<std::optional<SoundClass>> decided, top;
  std::vector<SoundClass> truth;
  for (const auto& clip : clips) {
    if (!clip.label) throw std::invalid_argument("evaluate_model: clip has no label");
    const auto p = model(clip);
    decided.push_back(nn::classify(p, threshold));
    top.push_back(nn::argmax_class(p));
    truth.push_back(*clip.label);
  }
  Evaluation e;
  e.decisions = metrics::confusion(decided, truth, true);
  e.argmax = metrics::confusion(top, truth, false);
  e.argmax_accuracy = static_cast<double>(e.argmax.trace()) / static_cast<double>(e.argmax.total());
  e.decision_accuracy = static_cast<double>(e.decisions.trace()) / static_cast<double>(e.decisions.total());
  return e;
}

/// Unordered class pair {i, j}, i < j, with the most mistakes in either direction.
struct ConfusionPair {
  std::size_t a = 0;
  std::size_t b = 0;
  std::uint64_t count = 0;
  bool unique = true;  // no other pair reaches the same count
};

inline ConfusionPair largest_confusion_pair(const metrics::ConfusionMatrix& m) {
  ConfusionPair best;
  bool first = true;
  for (std::size_t i = 0; i < m.classes(); ++i) {
    for (std::size_t j = i + 1; j < m.classes(); ++j) {
      const auto n = m.at(i, j) + m.at(j, i);
      if (first || n > best.count) {
        best = {i, j, n, true};
        first = false;
      } else if (n == best.count) {
        best.unique = false;
      }
    }
  }
  return best;
}

struct SyntheticRun {
  synth::DatasetManifest manifest;
  TrainedModel model;
  Evaluation test;
};

/// Synthetic dataset -> default pipeline -> held-out evaluation.
inline SyntheticRun synthetic_experiment(std::size_t per_class, std::uint64_t seed, const audio::FrontendConfig& fe = {},
                                         int epochs = 100) {
  SyntheticRun r;
  r.manifest = synth::plan_dataset(per_class, seed);
  const auto train = synthesize_split(r.manifest, synth::Split::train);
  const auto test = synthesize_split(r.manifest, synth::Split::test);
  nn::TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.rng_seed = seed;
  r.model = train_model(train, fe, cfg);
  r.test = evaluate_model(r.model.classifier(), test);
  return r;
}

}  // namespace rubble
