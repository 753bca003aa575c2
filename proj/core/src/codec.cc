#include "sdlab/codec.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "sdlab/errors.h"
#include "sdlab/rng.h"

namespace sdlab {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

}  // namespace

void QuantBlock::set_code(std::size_t i, std::uint8_t c) {
  std::uint8_t& byte = codes[i / 2];
  if (i % 2 == 0)
    byte = static_cast<std::uint8_t>((byte & 0xF0) | (c & 0x0F));
  else
    byte = static_cast<std::uint8_t>((byte & 0x0F) | ((c & 0x0F) << 4));
}

float e3m0_value(std::uint8_t code, float scale) {
  const int e = code & 0x7;
  if (e == 0) return 0.0f;
  const float mag = std::ldexp(scale, e - 7);
  return (code & kE3M0SignBit) ? -mag : mag;
}

QuantBlock encode_e3m0(std::span<const float> values) {
  QuantBlock block;
  block.count = static_cast<std::uint32_t>(values.size());
  block.codes.assign((values.size() + 1) / 2, 0);
  float scale = 0.0f;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      std::ostringstream os;
      os << "e3m0 encode: non-finite value at index " << i;
      throw CodecError(os.str());
    }
    scale = std::max(scale, std::fabs(values[i]));
  }
  block.scale = scale;
  if (scale == 0.0f) return block;

  // Nearest grid point in log2 space. |x| >= 2^(k - 1/2) * scale is tested as
  // x^2 >= scale^2 * 2^(2k - 1), which is exact in double for float inputs.
  const double s2 = static_cast<double>(scale) * static_cast<double>(scale);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double x = values[i];
    if (x == 0.0) continue;
    const double x2 = x * x;
    std::uint8_t code = kE3M0Zero;
    for (int k = 0; k >= -6; --k) {
      if (x2 >= std::ldexp(s2, 2 * k - 1)) {
        code = static_cast<std::uint8_t>(k + 7);
        break;
      }
    }
    if (code != kE3M0Zero && x < 0.0) code |= kE3M0SignBit;
    block.set_code(i, code);
  }
  return block;
}

std::vector<float> decode_e3m0(const QuantBlock& block) {
  if (block.codes.size() != (static_cast<std::size_t>(block.count) + 1) / 2) {
    std::ostringstream os;
    os << "e3m0 decode: " << block.codes.size() << " code bytes for count " << block.count;
    throw CodecError(os.str());
  }
  if (!std::isfinite(block.scale) || block.scale < 0.0f)
    throw CodecError("e3m0 decode: scale must be finite and non-negative");
  std::vector<float> out(block.count);
  for (std::size_t i = 0; i < block.count; ++i) {
    const std::uint8_t c = block.code(i);
    if (block.scale == 0.0f && (c & 0x7) != 0) {
      std::ostringstream os;
      os << "e3m0 decode: nonzero code at index " << i << " with zero scale";
      throw CodecError(os.str());
    }
    out[i] = e3m0_value(c, block.scale);
  }
  if (block.count % 2 == 1 && (block.codes.back() >> 4) != 0)
    throw CodecError("e3m0 decode: padding nibble must be zero");
  return out;
}

std::size_t e3m0_wire_size(std::size_t count) { return 8 + (count + 1) / 2; }

std::vector<std::uint8_t> serialize(const QuantBlock& block) {
  std::vector<std::uint8_t> out;
  out.reserve(e3m0_wire_size(block.count));
  std::uint32_t bits;
  std::memcpy(&bits, &block.scale, sizeof bits);
  put_u32(out, bits);
  put_u32(out, block.count);
  out.insert(out.end(), block.codes.begin(), block.codes.end());
  return out;
}

QuantBlock parse_quant_block(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw CodecError("e3m0 block shorter than its 8-byte header");
  QuantBlock block;
  const std::uint32_t bits = get_u32(bytes, 0);
  std::memcpy(&block.scale, &bits, sizeof bits);
  block.count = get_u32(bytes, 4);
  if (bytes.size() != e3m0_wire_size(block.count)) {
    std::ostringstream os;
    os << "e3m0 block of " << bytes.size() << " bytes, count " << block.count
       << " needs " << e3m0_wire_size(block.count);
    throw CodecError(os.str());
  }
  block.codes.assign(bytes.begin() + 8, bytes.end());
  return block;
}

std::size_t topk_keep_count(std::size_t n, double keep_fraction) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
    throw ConfigError("keep_fraction must be in (0, 1]");
  // Guard against 0.1 * 30 = 3.0000000000000004 style products.
  const double k = std::ceil(keep_fraction * static_cast<double>(n) - 1e-9);
  return std::min<std::size_t>(n, static_cast<std::size_t>(std::max(0.0, k)));
}

template <typename Real>
std::vector<Real> topk_compress(std::span<const Real> values, double keep_fraction) {
  const std::size_t k = topk_keep_count(values.size(), keep_fraction);
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      const Real ma = std::fabs(values[a]);
                      const Real mb = std::fabs(values[b]);
                      return ma != mb ? ma > mb : a < b;
                    });
  std::vector<Real> out(values.size(), Real(0));
  for (std::size_t i = 0; i < k; ++i) out[order[i]] = values[order[i]];
  return out;
}

template <typename Real>
std::vector<Real> random_drop_compress(std::span<const Real> values, double drop_prob,
                                       std::uint64_t seed, std::size_t* kept) {
  if (!(drop_prob >= 0.0 && drop_prob < 1.0)) throw ConfigError("drop_prob must be in [0, 1)");
  Engine eng(seed);
  const Real rescale = static_cast<Real>(1.0 / (1.0 - drop_prob));
  std::vector<Real> out(values.size(), Real(0));
  std::size_t survivors = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (uniform01(eng) < drop_prob) continue;
    out[i] = values[i] * rescale;
    ++survivors;
  }
  if (kept) *kept = survivors;
  return out;
}

void CodecSpec::validate() const {
  if (kind == CodecKind::kTopK && !(keep_fraction > 0.0 && keep_fraction <= 1.0))
    throw ConfigError("codec.keep_fraction must be in (0, 1]");
  if (kind == CodecKind::kRandomDrop && !(drop_prob >= 0.0 && drop_prob < 1.0))
    throw ConfigError("codec.drop_prob must be in [0, 1)");
}

const char* to_string(CodecKind k) {
  switch (k) {
    case CodecKind::kIdentity: return "identity";
    case CodecKind::kE3M0: return "e3m0";
    case CodecKind::kTopK: return "topk";
    case CodecKind::kRandomDrop: return "random_drop";
  }
  return "?";
}

CodecKind parse_codec_kind(const std::string& s) {
  if (s == "identity" || s == "fp32") return CodecKind::kIdentity;
  if (s == "e3m0" || s == "fp4") return CodecKind::kE3M0;
  if (s == "topk") return CodecKind::kTopK;
  if (s == "random_drop" || s == "dare") return CodecKind::kRandomDrop;
  throw ConfigError("unknown codec '" + s + "' (expected identity|e3m0|topk|random_drop)");
}

template <typename Real>
Transmission<Real> transmit(const CodecSpec& codec, std::span<const Real> values,
                            std::uint64_t seed) {
  Transmission<Real> tx;
  switch (codec.kind) {
    case CodecKind::kIdentity:
      for (std::size_t i = 0; i < values.size(); ++i)
        if (!std::isfinite(values[i])) {
          std::ostringstream os;
          os << "identity codec: non-finite value at index " << i;
          throw CodecError(os.str());
        }
      tx.decoded.assign(values.begin(), values.end());
      tx.wire_bytes = values.size() * sizeof(Real);
      break;
    case CodecKind::kE3M0: {
      std::vector<float> as_float(values.begin(), values.end());
      const std::vector<float> dec = decode_e3m0(encode_e3m0(as_float));
      tx.decoded.assign(dec.begin(), dec.end());
      tx.wire_bytes = e3m0_wire_size(values.size());
      break;
    }
    case CodecKind::kTopK: {
      tx.decoded = topk_compress(values, codec.keep_fraction);
      tx.wire_bytes = 4 + 8 * topk_keep_count(values.size(), codec.keep_fraction);
      break;
    }
    case CodecKind::kRandomDrop: {
      std::size_t kept = 0;
      tx.decoded = random_drop_compress(values, codec.drop_prob, seed, &kept);
      tx.wire_bytes = 4 + 8 * kept;
      break;
    }
  }
  return tx;
}

#define SDLAB_INSTANTIATE(Real)                                                              \
  template std::vector<Real> topk_compress(std::span<const Real>, double);                   \
  template std::vector<Real> random_drop_compress(std::span<const Real>, double,             \
                                                  std::uint64_t, std::size_t*);              \
  template Transmission<Real> transmit(const CodecSpec&, std::span<const Real>, std::uint64_t);

SDLAB_INSTANTIATE(float)
SDLAB_INSTANTIATE(double)
#undef SDLAB_INSTANTIATE

}  // namespace sdlab
