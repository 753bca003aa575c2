#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace sdlab {

struct Block {
  std::string name;
  std::size_t start = 0;
  std::size_t length = 0;

  std::size_t end() const { return start + length; }
  bool operator==(const Block&) const = default;
};

// Half-open index range [begin, end) into a flat parameter vector.
struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool operator==(const IndexRange&) const = default;
};

// Ordered block table; ranges must tile [0, total) contiguously.
class BlockLayout {
 public:
  BlockLayout() = default;
  explicit BlockLayout(std::vector<Block> blocks);

  const std::vector<Block>& blocks() const { return blocks_; }
  std::size_t total() const { return total_; }
  std::size_t num_blocks() const { return blocks_.size(); }
  const Block& block(std::size_t i) const { return blocks_.at(i); }
  // Index of the block with this name; throws StructuralError if absent.
  std::size_t find(const std::string& name) const;

  bool operator==(const BlockLayout&) const = default;

 private:
  std::vector<Block> blocks_;
  std::size_t total_ = 0;
};

template <typename Real>
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(BlockLayout layout, Real fill = Real(0))
      : layout_(std::move(layout)), data_(layout_.total(), fill) {}
  ParamVector(BlockLayout layout, std::vector<Real> data);

  const BlockLayout& layout() const { return layout_; }
  std::size_t size() const { return data_.size(); }

  std::span<Real> data() { return data_; }
  std::span<const Real> data() const { return data_; }
  std::vector<Real>& values() { return data_; }
  const std::vector<Real>& values() const { return data_; }

  std::span<Real> block(std::size_t i) {
    const Block& b = layout_.block(i);
    return std::span<Real>(data_).subspan(b.start, b.length);
  }
  std::span<const Real> block(std::size_t i) const {
    const Block& b = layout_.block(i);
    return std::span<const Real>(data_).subspan(b.start, b.length);
  }

  Real& operator[](std::size_t i) { return data_[i]; }
  const Real& operator[](std::size_t i) const { return data_[i]; }

  bool operator==(const ParamVector&) const = default;

 private:
  BlockLayout layout_;
  std::vector<Real> data_;
};

enum class FragmentPattern { kSequential, kStrided };

const char* to_string(FragmentPattern p);
FragmentPattern parse_fragment_pattern(const std::string& s);

// Partition of L synchronizable blocks into P fragments of |p| blocks each,
// plus per-fragment step offsets once assign_offsets has run.
struct FragmentSpec {
  std::size_t num_blocks = 0;
  std::size_t fragment_size = 0;
  FragmentPattern pattern = FragmentPattern::kStrided;
  std::vector<std::vector<std::size_t>> fragments;
  std::vector<long> offsets;  // empty until assigned
  long period = 0;            // H used for the offsets, 0 until assigned

  std::size_t num_fragments() const { return fragments.size(); }
  bool has_offsets() const { return !offsets.empty(); }
  // Smallest t >= H with (t - t_p) mod H == 0.
  long first_send(std::size_t p) const;
};

FragmentSpec partition(std::size_t num_blocks, std::size_t fragment_size,
                       FragmentPattern pattern);

// t_p = floor(p * H / P). Requires H >= P.
FragmentSpec assign_offsets(FragmentSpec spec, long period);

// Parameter ranges owned by each fragment. `sync_blocks` maps synchronizable
// block l to its index in the layout; all other layout blocks are
// non-block parameters, which are concatenated and split into P contiguous
// chunks (chunk sizes differ by at most one). Ranges come back sorted and
// merged so that gathering a fragment visits parameters in ascending order.
std::vector<std::vector<IndexRange>> fragment_ranges(
    const FragmentSpec& spec, const BlockLayout& layout,
    std::span<const std::size_t> sync_blocks);

std::size_t total_size(std::span<const IndexRange> ranges);

// Copies the fragment's parameters into a contiguous buffer.
template <typename Real>
void gather(std::span<const Real> src, std::span<const IndexRange> ranges,
            std::span<Real> dst) {
  std::size_t k = 0;
  for (const IndexRange& r : ranges)
    for (std::size_t i = r.begin; i < r.end; ++i) dst[k++] = src[i];
}

template <typename Real>
void scatter(std::span<const Real> src, std::span<const IndexRange> ranges,
             std::span<Real> dst) {
  std::size_t k = 0;
  for (const IndexRange& r : ranges)
    for (std::size_t i = r.begin; i < r.end; ++i) dst[i] = src[k++];
}

}  // namespace sdlab
