#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sdlab {

// E3M0: 4-bit float, 1 sign bit (bit 3) and 3 exponent bits (bits 0-2).
// Exponent e in 1..7 decodes to sign * 2^(e-7) * scale; e == 0 is zero.
// The scale is the per-block max magnitude.
struct QuantBlock {
  float scale = 0.0f;
  std::uint32_t count = 0;
  std::vector<std::uint8_t> codes;  // ceil(count/2) bytes, low nibble = even index

  std::uint8_t code(std::size_t i) const {
    const std::uint8_t byte = codes[i / 2];
    return (i % 2 == 0) ? (byte & 0x0F) : (byte >> 4);
  }
  void set_code(std::size_t i, std::uint8_t c);

  bool operator==(const QuantBlock&) const = default;
};

inline constexpr std::uint8_t kE3M0Zero = 0x0;
inline constexpr std::uint8_t kE3M0SignBit = 0x8;

// Decoded value of one code under a given scale.
float e3m0_value(std::uint8_t code, float scale);

QuantBlock encode_e3m0(std::span<const float> values);
std::vector<float> decode_e3m0(const QuantBlock& block);

// Wire layout: f32 LE scale, u32 LE count, packed codes.
std::size_t e3m0_wire_size(std::size_t count);
std::vector<std::uint8_t> serialize(const QuantBlock& block);
QuantBlock parse_quant_block(std::span<const std::uint8_t> bytes);

// Keeps the ceil(keep_fraction * n) largest-magnitude entries (ties go to the
// lower index) and zeroes the rest.
template <typename Real>
std::vector<Real> topk_compress(std::span<const Real> values, double keep_fraction);
std::size_t topk_keep_count(std::size_t n, double keep_fraction);

// Zeroes each entry with probability drop_prob and rescales survivors by
// 1 / (1 - drop_prob). Returns the number of survivors through `kept`.
template <typename Real>
std::vector<Real> random_drop_compress(std::span<const Real> values, double drop_prob,
                                       std::uint64_t seed, std::size_t* kept = nullptr);

enum class CodecKind { kIdentity, kE3M0, kTopK, kRandomDrop };

struct CodecSpec {
  CodecKind kind = CodecKind::kIdentity;
  double keep_fraction = 1.0;  // top-k
  double drop_prob = 0.0;      // random drop

  void validate() const;
};

const char* to_string(CodecKind k);
CodecKind parse_codec_kind(const std::string& s);

// What the receiver reconstructs from one replica's fragment, and how many
// bytes went over the wire.
template <typename Real>
struct Transmission {
  std::vector<Real> decoded;
  std::size_t wire_bytes = 0;
};

// Identity: sizeof(Real) bytes per value. E3M0: e3m0_wire_size. Top-k and
// random drop: u32 count plus (u32 index, f32 value) per kept entry.
template <typename Real>
Transmission<Real> transmit(const CodecSpec& codec, std::span<const Real> values,
                            std::uint64_t seed);

}  // namespace sdlab
