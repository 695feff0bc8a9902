// Shared vocabulary: the fixed sound-class set, error types, and small helpers.
#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rubble {

/// Sound classes in the fixed output order of the classifier.
enum class SoundClass : std::uint8_t { breathes = 0, cough, hello_help, muffled_words, noise };

inline constexpr std::size_t kNumClasses = 5;

inline constexpr std::array<std::string_view, kNumClasses> kClassNames{
    "breathes", "cough", "hello_help", "muffled_words", "noise"};

inline constexpr std::array<SoundClass, kNumClasses> kAllClasses{
    SoundClass::breathes, SoundClass::cough, SoundClass::hello_help, SoundClass::muffled_words,
    SoundClass::noise};

constexpr std::size_t index_of(SoundClass c) { return static_cast<std::size_t>(c); }
constexpr std::string_view name_of(SoundClass c) { return kClassNames[index_of(c)]; }

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a value or file does not satisfy a documented format.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline std::string normalize_label(std::string_view text) {
  std::string out;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c) || ch == ':') continue;
    if (ch == '-' || ch == ',' || ch == ' ') {
      out.push_back('_');
    } else {
      out.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  return out;
}

}  // namespace detail

/// Accepts canonical ids plus the spellings seen on device serial output
/// ("hello,help", "hello-help", "Noise", "breath", "muffled words").
inline std::optional<SoundClass> parse_class(std::string_view text) {
  const std::string key = detail::normalize_label(text);
  for (auto c : kAllClasses) {
    if (key == name_of(c)) return c;
  }
  if (key == "breath" || key == "breathe") return SoundClass::breathes;
  if (key == "coughs") return SoundClass::cough;
  if (key == "hellohelp" || key == "hello__help") return SoundClass::hello_help;
  if (key == "muffledwords") return SoundClass::muffled_words;
  return std::nullopt;
}

/// splitmix64 finalizer; used to derive independent child seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return mix_seed(mix_seed(mix_seed(seed) ^ a) ^ (b * 0x2545f4914f6cdd1dULL));
}

}  // namespace rubble
