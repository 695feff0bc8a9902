// Mini-batch Adam training with a seeded validation split.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <vector>

#include "rubble/nn/adam.hpp"
#include "rubble/nn/network.hpp"

namespace rubble::nn {

struct TrainConfig {
  double learning_rate = 0.0005;
  int epochs = 100;
  double validation_split = 0.2;
  int batch_size = 32;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (!(validation_split > 0.0 && validation_split < 1.0)) throw std::invalid_argument("validation_split must be in (0, 1)");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
    if (epochs < 0 || batch_size < 1) throw std::invalid_argument("epochs >= 0 and batch_size >= 1 required");
  }
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

class MissingClass : public Error {
 public:
  using Error::Error;
};

template <typename T>
struct FitResult {
  Weights<T> weights;
  std::vector<EpochStats> history;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Mean cross-entropy and argmax accuracy with dropout off.
template <typename T>
EvalResult evaluate(const ModelSpec& spec, const Weights<T>& weights, std::span<const LabeledFeatures* const> data) {
  if (data.empty()) return {};
  const auto shapes = activation_shapes(spec);
  ForwardCache<T> cache;
  std::vector<T> input;
  EvalResult r;
  std::size_t correct = 0;
  for (const auto* ex : data) {
    input.assign(ex->features.values.begin(), ex->features.values.end());
    forward_pass<T>(spec, shapes, weights, input, cache);
    const auto& p = cache.acts.back();
    const std::size_t label = index_of(ex->label);
    r.loss += -std::log(std::max(static_cast<double>(p[label]), 1e-300));
    if (static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin()) == label) ++correct;
  }
  r.loss /= static_cast<double>(data.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return r;
}

inline void require_all_classes(std::span<const LabeledFeatures> data) {
  std::array<std::size_t, kNumClasses> counts{};
  for (const auto& ex : data) ++counts[index_of(ex.label)];
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    if (counts[k] == 0) throw MissingClass("dataset has no examples of class " + std::string(kClassNames[k]));
  }
}

/// Trains on `train` and reports `val` after every epoch.
/// Initialization, shuffling and dropout masks all derive from cfg.rng_seed.
inline FitResult<double> fit(const ModelSpec& spec, std::span<const LabeledFeatures* const> train,
                             std::span<const LabeledFeatures* const> val, const TrainConfig& cfg,
                             std::optional<Weights<double>> initial = std::nullopt) {
  validate_classifier(spec);
  if (cfg.epochs < 0 || cfg.batch_size < 1 || !(cfg.learning_rate > 0.0)) throw std::invalid_argument("bad TrainConfig");
  if (train.empty()) throw std::invalid_argument("fit: empty training set");

  FitResult<double> result;
  result.weights = initial ? std::move(*initial) : init_weights<double>(spec, cfg.rng_seed);
  check_weights_shape(spec, result.weights);
  if (cfg.epochs == 0) return result;

  auto state = AdamState<double>::zeros_like(result.weights);
  const AdamParams adam{cfg.learning_rate};
  std::mt19937_64 shuffle_rng(derive_seed(cfg.rng_seed, 0x5a1));
  std::mt19937_64 dropout_rng(derive_seed(cfg.rng_seed, 0xd40));
  std::vector<const LabeledFeatures*> order(train.begin(), train.end());
  std::int64_t step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t len = std::min(order.size() - start, static_cast<std::size_t>(cfg.batch_size));
      const std::span<const LabeledFeatures* const> batch(order.data() + start, len);
      auto g = gradients<double>(spec, result.weights, batch, &dropout_rng);
      if (!std::isfinite(g.loss)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", batch starting at " << start << " (step " << step + 1
            << "); lower the learning rate or check features for NaN/Inf";
        throw TrainingDiverged(msg.str());
      }
      loss_sum += g.loss * static_cast<double>(len);
      correct += g.correct;
      adam_step(result.weights, g.grads, state, ++step, adam);
    }
    EpochStats s;
    s.epoch = epoch;
    s.train_loss = loss_sum / static_cast<double>(order.size());
    s.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    const auto v = evaluate<double>(spec, result.weights, val);
    s.val_loss = v.loss;
    s.val_accuracy = v.accuracy;
    result.history.push_back(s);
  }
  return result;
}

/// Seeded shuffle, then the last `validation_split` fraction is held out for validation.
inline FitResult<double> fit(const ModelSpec& spec, std::span<const LabeledFeatures> data, const TrainConfig& cfg,
                             std::optional<Weights<double>> initial = std::nullopt) {
  cfg.validate();
  require_all_classes(data);
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(cfg.rng_seed, 0x5917));
  std::shuffle(idx.begin(), idx.end(), rng);
  auto n_val = static_cast<std::size_t>(std::llround(cfg.validation_split * static_cast<double>(data.size())));
  n_val = std::min(n_val, data.size() - 1);
  const std::size_t n_train = data.size() - n_val;

  std::vector<const LabeledFeatures*> train, val;
  for (std::size_t i = 0; i < idx.size(); ++i) (i < n_train ? train : val).push_back(&data[idx[i]]);
  auto result = fit(spec, train, val, cfg, std::move(initial));
  result.train_indices.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  result.val_indices.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  return result;
}

}  // namespace rubble::nn
