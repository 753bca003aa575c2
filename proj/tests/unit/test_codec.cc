#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sdlab/codec.h"
#include "sdlab/errors.h"

namespace sdlab {
namespace {

// Log-domain oracle: nearest exponent in {-6..0} by rounding log2(|x|/scale).
float oracle_e3m0(float x, float scale) {
  if (x == 0.0f || scale == 0.0f) return 0.0f;
  const long double r = std::log2(std::fabs(static_cast<long double>(x)) / scale);
  const long double k = std::floor(r + 0.5L);
  if (k < -6) return 0.0f;
  const float mag = std::ldexp(scale, static_cast<int>(k));
  return x < 0 ? -mag : mag;
}

TEST(E3M0, ZeroVector) {
  const std::vector<float> v(5, 0.0f);
  const QuantBlock b = encode_e3m0(v);
  EXPECT_EQ(b.scale, 0.0f);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(b.code(i), kE3M0Zero);
  EXPECT_EQ(decode_e3m0(b), v);
}

TEST(E3M0, PowersOfTwoRoundTripExactly) {
  const std::vector<float> v = {1.0f, -0.5f, 0.25f};
  const QuantBlock b = encode_e3m0(v);
  EXPECT_EQ(b.scale, 1.0f);
  EXPECT_EQ(decode_e3m0(b), v);
}

TEST(E3M0, NearestInLogSpace) {
  const std::vector<float> v = {1.0f, 0.7f};
  EXPECT_EQ(decode_e3m0(encode_e3m0(v))[1], 0.5f);
  // 0.75 is above 2^-0.5 ~ 0.7071, so it rounds up to the scale.
  const std::vector<float> w = {1.0f, 0.75f};
  EXPECT_EQ(decode_e3m0(encode_e3m0(w))[1], 1.0f);
}

TEST(E3M0, UnderflowToZeroBelowHalfOctaveOfSmallestCode) {
  const float lo = std::ldexp(1.0f, -6);
  const float cut = std::pow(2.0f, -6.5f);
  const std::vector<float> v = {1.0f, lo, cut * 1.001f, cut * 0.999f, -cut * 0.999f};
  const std::vector<float> d = decode_e3m0(encode_e3m0(v));
  EXPECT_EQ(d[1], lo);
  EXPECT_EQ(d[2], lo);
  EXPECT_EQ(d[3], 0.0f);
  EXPECT_EQ(d[4], 0.0f);
  const QuantBlock b = encode_e3m0(v);
  EXPECT_EQ(b.code(4), kE3M0Zero) << "encoders emit s=0 with e=0";
}

TEST(E3M0, NegativeTopCodeDecodes) {
  QuantBlock b;
  b.scale = 2.0f;
  b.count = 1;
  b.codes = {0x0F};
  EXPECT_EQ(decode_e3m0(b)[0], -2.0f);
  EXPECT_EQ(e3m0_value(0x8, 3.0f), 0.0f);
  EXPECT_FALSE(std::signbit(e3m0_value(0x8, 3.0f)));
}

TEST(E3M0, AllFifteenCodesRoundTripUnderRandomScales) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<float> ls(-20.0f, 20.0f);
  for (int trial = 0; trial < 200; ++trial) {
    const float scale = std::exp2(ls(rng));
    std::vector<float> grid;
    for (std::uint8_t c = 0; c < 16; ++c) {
      if (c == kE3M0SignBit) continue;  // -0 alias of the zero code
      grid.push_back(e3m0_value(c, scale));
    }
    ASSERT_EQ(grid.size(), 15u);
    // Force the block scale by including the top code.
    const QuantBlock b = encode_e3m0(grid);
    ASSERT_EQ(b.scale, scale);
    ASSERT_EQ(decode_e3m0(b), grid);
  }
}

TEST(E3M0, RelativeErrorBoundAndOracleAgreement) {
  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> expo(-6.0, 0.0);
  std::uniform_real_distribution<double> lscale(-30.0, 30.0);
  const double bound = std::sqrt(2.0) - 1.0;
  std::size_t checked = 0;
  for (int block = 0; block < 1000; ++block) {
    const float scale = static_cast<float>(std::exp2(lscale(rng)));
    std::vector<float> v = {scale};
    for (int i = 0; i < 100; ++i) {
      const float mag = static_cast<float>(scale * std::exp2(expo(rng)));
      v.push_back((rng() & 1) ? mag : -mag);
    }
    const QuantBlock b = encode_e3m0(v);
    ASSERT_EQ(b.scale, scale);
    const std::vector<float> d = decode_e3m0(b);
    for (std::size_t i = 1; i < v.size(); ++i) {
      if (std::fabs(v[i]) < std::ldexp(scale, -6)) continue;
      ASSERT_LE(std::fabs(static_cast<double>(d[i]) - v[i]), bound * std::fabs(v[i]) * (1 + 1e-6));
      ASSERT_EQ(d[i], oracle_e3m0(v[i], scale));
      ++checked;
    }
  }
  EXPECT_GE(checked, 99000u);
}

TEST(E3M0, SignAndWeakMagnitudeOrderPreserved) {
  std::mt19937_64 rng(9);
  std::normal_distribution<float> nd(0.0f, 1.0f);
  std::vector<float> v(500);
  for (float& x : v) x = nd(rng);
  const std::vector<float> d = decode_e3m0(encode_e3m0(v));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (d[i] != 0.0f) EXPECT_EQ(std::signbit(d[i]), std::signbit(v[i]));
    for (std::size_t j = 0; j < 20; ++j)
      if (std::fabs(v[i]) <= std::fabs(v[j])) EXPECT_LE(std::fabs(d[i]), std::fabs(d[j]));
  }
}

TEST(E3M0, IdempotentOnGrid) {
  std::mt19937_64 rng(2);
  std::normal_distribution<float> nd(0.0f, 3.0f);
  std::vector<float> v(77);
  for (float& x : v) x = nd(rng);
  const std::vector<float> once = decode_e3m0(encode_e3m0(v));
  EXPECT_EQ(decode_e3m0(encode_e3m0(once)), once);
}

TEST(E3M0, NonFiniteInputNamesIndex) {
  const std::vector<float> v = {1.0f, 2.0f, std::numeric_limits<float>::infinity()};
  try {
    encode_e3m0(v);
    FAIL();
  } catch (const CodecError& e) {
    EXPECT_NE(std::string(e.what()).find("index 2"), std::string::npos);
  }
}

TEST(E3M0, WireFormatIsBitExact) {
  const std::vector<float> v = {1.0f, -0.5f, 0.25f};
  const QuantBlock b = encode_e3m0(v);
  const std::vector<std::uint8_t> bytes = serialize(b);
  // scale 1.0f = 0x3F800000 LE, count 3 LE, codes: [1.0 -> 7 | -0.5 -> 0xE << 4], [0.25 -> 5]
  const std::vector<std::uint8_t> want = {0x00, 0x00, 0x80, 0x3F, 0x03, 0x00, 0x00,
                                          0x00, 0xE7, 0x05};
  EXPECT_EQ(bytes, want);
  EXPECT_EQ(parse_quant_block(bytes), b);
  for (std::size_t n : {0u, 1u, 2u, 7u, 100u, 1001u}) {
    const std::vector<float> z(n, 0.5f);
    EXPECT_EQ(serialize(encode_e3m0(z)).size(), e3m0_wire_size(n));
    EXPECT_EQ(e3m0_wire_size(n), 8 + (n + 1) / 2);
  }
}

TEST(E3M0, MalformedBlocksRejected) {
  QuantBlock b = encode_e3m0(std::vector<float>{1.0f, 0.5f, 0.25f});
  QuantBlock short_codes = b;
  short_codes.codes.pop_back();
  EXPECT_THROW(decode_e3m0(short_codes), CodecError);
  QuantBlock bad_pad = b;
  bad_pad.codes.back() |= 0x30;
  EXPECT_THROW(decode_e3m0(bad_pad), CodecError);
  QuantBlock zero_scale = b;
  zero_scale.scale = 0.0f;
  EXPECT_THROW(decode_e3m0(zero_scale), CodecError);
  std::vector<std::uint8_t> bytes = serialize(b);
  bytes.push_back(0);
  EXPECT_THROW(parse_quant_block(bytes), CodecError);
  EXPECT_THROW(parse_quant_block(std::vector<std::uint8_t>{1, 2, 3}), CodecError);
}

TEST(TopK, KeepsLargestMagnitudes) {
  const std::vector<double> v = {3.0, -1.0, 2.0};
  EXPECT_EQ(topk_compress<double>(v, 1.0 / 3.0), (std::vector<double>{3.0, 0.0, 0.0}));
  EXPECT_EQ(topk_compress<double>(v, 1.0), v);
  const std::vector<double> ties = {1.0, -1.0, 1.0, 0.5};
  EXPECT_EQ(topk_compress<double>(ties, 0.5), (std::vector<double>{1.0, -1.0, 0.0, 0.0}));
  EXPECT_EQ(topk_keep_count(30, 0.1), 3u);
  EXPECT_EQ(topk_keep_count(10, 0.25), 3u);
  EXPECT_THROW(topk_keep_count(10, 0.0), ConfigError);
  EXPECT_THROW(topk_keep_count(10, 1.5), ConfigError);
}

TEST(RandomDrop, UnbiasedAcrossSeeds) {
  const std::vector<double> v = {1.0, -2.0, 0.5, 4.0};
  const int trials = 10000;
  std::vector<double> sum(v.size(), 0.0);
  for (int s = 0; s < trials; ++s) {
    const auto out = random_drop_compress<double>(v, 0.5, static_cast<std::uint64_t>(s));
    for (std::size_t i = 0; i < v.size(); ++i) {
      ASSERT_TRUE(out[i] == 0.0 || out[i] == 2.0 * v[i]);
      sum[i] += out[i];
    }
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    // Each sample is 0 or 2v with equal odds: sd of the mean is |v| / sqrt(trials).
    const double sigma = std::fabs(v[i]) / std::sqrt(static_cast<double>(trials));
    EXPECT_NEAR(sum[i] / trials, v[i], 3.0 * sigma);
  }
}

TEST(RandomDrop, DeterministicAndCountsSurvivors) {
  std::vector<float> v(1000, 1.0f);
  std::size_t kept = 0, kept2 = 0;
  const auto a = random_drop_compress<float>(v, 0.3, 77, &kept);
  const auto b = random_drop_compress<float>(v, 0.3, 77, &kept2);
  EXPECT_EQ(a, b);
  EXPECT_EQ(kept, kept2);
  EXPECT_EQ(kept, static_cast<std::size_t>(std::count_if(a.begin(), a.end(), [](float x) { return x != 0; })));
  EXPECT_EQ(random_drop_compress<float>(v, 0.0, 1), v);
  EXPECT_THROW(random_drop_compress<float>(v, 1.0, 1), ConfigError);
}

TEST(Transmit, WireSizesPerCodec) {
  std::vector<float> v(101);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i) - 50.0f;
  EXPECT_EQ(transmit<float>(CodecSpec{}, v, 0).wire_bytes, 4 * 101u);
  EXPECT_EQ(transmit<double>(CodecSpec{}, std::vector<double>(v.begin(), v.end()), 0).wire_bytes,
            8 * 101u);
  EXPECT_EQ(transmit<float>(CodecSpec{CodecKind::kE3M0, 1.0, 0.0}, v, 0).wire_bytes,
            e3m0_wire_size(101));
  EXPECT_EQ(transmit<float>(CodecSpec{CodecKind::kTopK, 0.1, 0.0}, v, 0).wire_bytes,
            4 + 8 * topk_keep_count(101, 0.1));
  const auto rd = transmit<float>(CodecSpec{CodecKind::kRandomDrop, 1.0, 0.5}, v, 3);
  std::size_t kept = 0;
  random_drop_compress<float>(v, 0.5, 3, &kept);
  EXPECT_EQ(rd.wire_bytes, 4 + 8 * kept);
  EXPECT_EQ(transmit<float>(CodecSpec{}, v, 0).decoded, v);
}

TEST(CodecSpec, ParseAndValidate) {
  EXPECT_EQ(parse_codec_kind("fp32"), CodecKind::kIdentity);
  EXPECT_EQ(parse_codec_kind("fp4"), CodecKind::kE3M0);
  EXPECT_EQ(parse_codec_kind("dare"), CodecKind::kRandomDrop);
  EXPECT_THROW(parse_codec_kind("gzip"), ConfigError);
  EXPECT_THROW((CodecSpec{CodecKind::kRandomDrop, 1.0, 1.0}.validate()), ConfigError);
  EXPECT_THROW((CodecSpec{CodecKind::kTopK, 0.0, 0.0}.validate()), ConfigError);
}

}  // namespace
}  // namespace sdlab
