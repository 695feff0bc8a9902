#include <zlib.h>

#include <filesystem>

#include <gtest/gtest.h>

#include "rubble/nn/serialize.hpp"

using namespace rubble;
using namespace rubble::nn;

namespace {

std::uint32_t u32_at(const std::vector<std::uint8_t>& b, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[pos + static_cast<std::size_t>(i)];
  return v;
}

std::filesystem::path tmp(const char* name) { return std::filesystem::temp_directory_path() / name; }

}  // namespace

TEST(ModelFile, SaveLoadIsBitExact) {
  const auto spec = default_spec();
  auto w = init_weights<float>(spec, 7);
  w.layers[0][0] = -0.0F;
  w.layers[0][1] = 1e-42F;  // subnormal
  const auto path = tmp("rubble_model_roundtrip.rsnn");
  save_weights(spec, w, path);
  const auto back = load_weights(path);
  EXPECT_EQ(back.spec, spec);
  ASSERT_EQ(back.weights.layers.size(), w.layers.size());
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    ASSERT_EQ(back.weights.layers[i].size(), w.layers[i].size());
    for (std::size_t k = 0; k < w.layers[i].size(); ++k) {
      EXPECT_EQ(std::bit_cast<std::uint32_t>(back.weights.layers[i][k]), std::bit_cast<std::uint32_t>(w.layers[i][k]));
    }
  }
  EXPECT_FALSE(back.quantized);
  EXPECT_EQ(encode_model(back.spec, back.weights, back.frontend), read_file(path));
  std::filesystem::remove(path);
}

TEST(ModelFile, SizeIsHeaderPlusFourBytesPerParameter) {
  const auto spec = default_spec();
  const auto bytes = encode_model(spec, init_weights<float>(spec, 1));
  // 8 layers, 2413 parameters: 56 + 8*16 + count word + 4*2413 + CRC
  EXPECT_EQ(bytes.size(), 56U + 128U + 4U + 4U * 2413U + 4U);
  EXPECT_EQ(model_file_size(spec), bytes.size());
  EXPECT_EQ(u32_at(bytes, 52), 8U);
  EXPECT_EQ(u32_at(bytes, 56 + 128), 2413U);
}

TEST(ModelFile, LayoutAndCrc) {
  const ModelSpec spec{{1, 3}, {LayerSpec::flatten(), LayerSpec::dense(5), LayerSpec::softmax()}};
  auto w = zero_weights<float>(spec);
  w.layers[1][0] = 1.5F;
  const auto bytes = encode_model(spec, w);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "RSNN");
  EXPECT_EQ(u32_at(bytes, 4), 1U);
  EXPECT_EQ(u32_at(bytes, 8), 0U);
  EXPECT_EQ(u32_at(bytes, 44), 1U);
  EXPECT_EQ(u32_at(bytes, 48), 3U);
  const std::size_t params_at = 56 + 3 * 16 + 4;
  EXPECT_EQ(u32_at(bytes, params_at), std::bit_cast<std::uint32_t>(1.5F));
  const auto crc = ::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size() - 4));
  EXPECT_EQ(u32_at(bytes, bytes.size() - 4), static_cast<std::uint32_t>(crc));
}

TEST(ModelFile, TruncatedIsCrcMismatch) {
  const auto spec = default_spec();
  const auto bytes = encode_model(spec, init_weights<float>(spec, 2));
  for (std::size_t cut : {std::size_t{1}, std::size_t{4}, std::size_t{100}, bytes.size() - 60}) {
    const std::vector<std::uint8_t> shorter(bytes.begin(), bytes.end() - static_cast<std::ptrdiff_t>(cut));
    try {
      decode_model(shorter);
      FAIL() << "accepted file truncated by " << cut;
    } catch (const ModelFileError& e) {
      EXPECT_NE(std::string(e.what()).find("CRC"), std::string::npos) << e.what();
    }
  }
}

TEST(ModelFile, FlippedBitIsCrcMismatch) {
  const auto spec = default_spec();
  auto bytes = encode_model(spec, init_weights<float>(spec, 3));
  bytes[500] ^= 0x10;
  EXPECT_THROW(decode_model(bytes), ModelFileError);
}

TEST(ModelFile, BadMagic) {
  const auto spec = default_spec();
  auto bytes = encode_model(spec, init_weights<float>(spec, 4));
  bytes[0] = 'X';
  try {
    decode_model(bytes);
    FAIL();
  } catch (const ModelFileError& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
  }
  EXPECT_THROW(decode_model(std::vector<std::uint8_t>{}), ModelFileError);
}

TEST(ModelFile, UnsupportedVersion) {
  const auto spec = default_spec();
  auto bytes = encode_model(spec, init_weights<float>(spec, 5));
  bytes[4] = 2;
  const auto crc = static_cast<std::uint32_t>(::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size() - 4)));
  std::memcpy(bytes.data() + bytes.size() - 4, &crc, 4);
  try {
    decode_model(bytes);
    FAIL();
  } catch (const ModelFileError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST(ModelFile, FrontendPreserved) {
  audio::FrontendConfig fe;
  fe.kind = audio::FrontendKind::mfcc;
  fe.num_filters = 32;
  fe.num_coeffs = 13;
  fe.f_low_hz = 100.0;
  fe.frame.stride = 256;
  const auto spec = default_spec({fe.rows(), fe.cols()});
  const auto back = decode_model(encode_model(spec, init_weights<float>(spec, 6), fe));
  EXPECT_EQ(back.frontend, fe);
  EXPECT_EQ(back.spec.input, (Shape{fe.rows(), fe.cols()}));
}

TEST(ModelFile, Int8RoundTrip) {
  const auto spec = default_spec();
  const auto q = quantize(init_weights<float>(spec, 8));
  const auto path = tmp("rubble_model_int8.rsnn");
  save_weights(spec, q, path);
  const auto back = load_weights(path);
  ASSERT_TRUE(back.quantized);
  EXPECT_EQ(*back.quantized, q);
  EXPECT_EQ(back.weights, dequantize(q));
  EXPECT_EQ(read_file(path).size(), model_file_size(spec, true));
  std::filesystem::remove(path);
}

TEST(ModelFile, Int8PayloadIsAboutAQuarter) {
  const auto spec = default_spec();
  const auto w = init_weights<float>(spec, 9);
  const auto overhead = 56 + 16 * spec.layers.size() + 8;
  const double f = static_cast<double>(encode_model(spec, w).size() - overhead);
  const double i8 = static_cast<double>(encode_model(spec, quantize(w)).size() - overhead);
  EXPECT_NEAR(i8 / f, 0.25, 0.02);
}

TEST(ModelFile, WrongWeightShapeRejected) {
  const auto spec = default_spec();
  auto w = init_weights<float>(spec, 10);
  w.layers[0].pop_back();
  EXPECT_THROW(encode_model(spec, w), ShapeError);
}

TEST(ModelFile, MissingFile) { EXPECT_THROW(load_weights("/nonexistent/rubble.rsnn"), Error); }
