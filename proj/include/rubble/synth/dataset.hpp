// Dataset generation: WAV files per class plus a JSON manifest with the train/test split.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rubble/audio/wav.hpp"
#include "rubble/synth/recipes.hpp"

namespace rubble::synth {

enum class Split : std::uint8_t { train, test };

inline std::string_view to_string(Split s) { return s == Split::train ? "train" : "test"; }

struct ManifestEntry {
  std::string path;  // relative to the manifest directory
  SoundClass label = SoundClass::noise;
  Split split = Split::train;
  std::uint64_t seed = 0;
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  double train_fraction = 0.84;
  std::array<std::size_t, kNumClasses> per_class{};
  std::vector<ManifestEntry> entries;

  std::size_t count(Split s) const {
    return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [s](const auto& e) { return e.split == s; }));
  }
  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

inline constexpr std::string_view kManifestName = "manifest.json";

/// Per-class train counts: the global train total is round(total * fraction), spread
/// over classes by largest remainder (ties to the earlier class).
inline std::array<std::size_t, kNumClasses> train_quota(const std::array<std::size_t, kNumClasses>& per_class,
                                                        double train_fraction) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) throw std::invalid_argument("train fraction must be in [0, 1]");
  const std::size_t total = std::accumulate(per_class.begin(), per_class.end(), std::size_t{0});
  const auto target = static_cast<std::size_t>(std::floor(static_cast<double>(total) * train_fraction + 0.5));
  std::array<std::size_t, kNumClasses> quota{};
  std::array<double, kNumClasses> rem{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    const double exact = static_cast<double>(per_class[k]) * train_fraction;
    quota[k] = static_cast<std::size_t>(std::floor(exact));
    rem[k] = exact - static_cast<double>(quota[k]);
    assigned += quota[k];
  }
  std::array<std::size_t, kNumClasses> order{0, 1, 2, 3, 4};
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return rem[a] > rem[b]; });
  for (std::size_t i = 0; assigned < target && i < order.size(); ++i) {
    if (quota[order[i]] < per_class[order[i]]) {
      ++quota[order[i]];
      ++assigned;
    }
  }
  return quota;
}

/// Builds the manifest without touching the filesystem.
inline DatasetManifest plan_dataset(const std::array<std::size_t, kNumClasses>& per_class, std::uint64_t seed,
                                    double train_fraction = 0.84) {
  DatasetManifest m;
  m.seed = seed;
  m.train_fraction = train_fraction;
  m.per_class = per_class;
  const auto quota = train_quota(per_class, train_fraction);
  for (auto c : kAllClasses) {
    const std::size_t k = index_of(c);
    std::vector<std::size_t> order(per_class[k]);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(seed, 0x5711, k));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> is_train(per_class[k], false);
    for (std::size_t i = 0; i < quota[k]; ++i) is_train[order[i]] = true;
    for (std::size_t i = 0; i < per_class[k]; ++i) {
      ManifestEntry e;
      e.label = c;
      e.split = is_train[i] ? Split::train : Split::test;
      e.seed = derive_seed(seed, k + 1, i);
      e.path = std::string(to_string(e.split)) + "/" + std::string(name_of(c)) + "/" + std::string(name_of(c)) + "_" +
               std::to_string(i) + ".wav";
      m.entries.push_back(std::move(e));
    }
  }
  return m;
}

inline DatasetManifest plan_dataset(std::size_t per_class_n, std::uint64_t seed, double train_fraction = 0.84) {
  std::array<std::size_t, kNumClasses> pc{};
  pc.fill(per_class_n);
  return plan_dataset(pc, seed, train_fraction);
}

inline nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json j;
  j["seed"] = m.seed;
  j["train_fraction"] = m.train_fraction;
  j["per_class"] = nlohmann::json::object();
  for (auto c : kAllClasses) j["per_class"][std::string(name_of(c))] = m.per_class[index_of(c)];
  j["entries"] = nlohmann::json::array();
  for (const auto& e : m.entries) {
    j["entries"].push_back({{"path", e.path}, {"label", name_of(e.label)}, {"split", to_string(e.split)}, {"seed", e.seed}});
  }
  return j;
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  try {
    DatasetManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.train_fraction = j.at("train_fraction").get<double>();
    for (auto c : kAllClasses) m.per_class[index_of(c)] = j.at("per_class").at(std::string(name_of(c))).get<std::size_t>();
    for (const auto& je : j.at("entries")) {
      ManifestEntry e;
      e.path = je.at("path").get<std::string>();
      const auto label = parse_class(je.at("label").get<std::string>());
      if (!label) throw FormatError("manifest entry has unknown label");
      e.label = *label;
      const auto split = je.at("split").get<std::string>();
      if (split != "train" && split != "test") throw FormatError("manifest entry has unknown split '" + split + "'");
      e.split = split == "train" ? Split::train : Split::test;
      e.seed = je.at("seed").get<std::uint64_t>();
      m.entries.push_back(std::move(e));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
}

/// Writes every clip and `manifest.json` under `out_dir`.
inline DatasetManifest generate_dataset(std::size_t per_class_n, std::uint64_t seed, const std::filesystem::path& out_dir,
                                        double train_fraction = 0.84) {
  auto m = plan_dataset(per_class_n, seed, train_fraction);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw Error("cannot create dataset directory " + out_dir.string() + ": " + ec.message());
  }
  for (const auto& e : m.entries) {
    const auto path = out_dir / e.path;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw Error("cannot create " + path.parent_path().string() + ": " + ec.message());
    audio::write_wav(generate_clip(e.label, e.seed), path);
  }
  std::ofstream out(out_dir / kManifestName);
  if (!out) throw Error("cannot write manifest in " + out_dir.string());
  out << to_json(m).dump(1) << '\n';
  return m;
}

inline DatasetManifest load_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / kManifestName);
  if (!in) throw Error("no manifest.json in " + dir.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest is not JSON: ") + e.what());
  }
  return manifest_from_json(j);
}

/// Loads and labels every clip of one split.
inline std::vector<audio::AudioClip> load_split(const std::filesystem::path& dir, const DatasetManifest& m, Split split) {
  std::vector<audio::AudioClip> clips;
  for (const auto& e : m.entries) {
    if (e.split != split) continue;
    auto clip = audio::read_wav(dir / e.path);
    clip.label = e.label;
    clips.push_back(std::move(clip));
  }
  return clips;
}

/// Train and test sizes of the full-scale recording campaign: 8040 + 1608 clips over five classes.
inline DatasetManifest full_scale_plan(std::uint64_t seed) {
  DatasetManifest m;
  m.seed = seed;
  m.train_fraction = 8040.0 / 9648.0;
  constexpr std::size_t kTrain = 8040, kTest = 1608;
  for (auto c : kAllClasses) {
    const std::size_t k = index_of(c);
    const std::size_t n_train = kTrain / kNumClasses;
    const std::size_t n_test = kTest / kNumClasses + (k < kTest % kNumClasses ? 1 : 0);
    m.per_class[k] = n_train + n_test;
    for (std::size_t i = 0; i < n_train + n_test; ++i) {
      ManifestEntry e;
      e.label = c;
      e.split = i < n_train ? Split::train : Split::test;
      e.seed = derive_seed(seed, k + 1, i);
      e.path = std::string(to_string(e.split)) + "/" + std::string(name_of(c)) + "/" + std::string(name_of(c)) + "_" +
               std::to_string(i) + ".wav";
      m.entries.push_back(std::move(e));
    }
  }
  return m;
}

}  // namespace rubble::synth
