#include "sdlab/param_space.h"

#include <algorithm>
#include <sstream>

#include "sdlab/errors.h"

namespace sdlab {

BlockLayout::BlockLayout(std::vector<Block> blocks) : blocks_(std::move(blocks)) {
  std::size_t expected = 0;
  for (const Block& b : blocks_) {
    if (b.start != expected) {
      std::ostringstream os;
      os << "block '" << b.name << "' starts at " << b.start << ", expected " << expected;
      throw StructuralError(os.str());
    }
    expected += b.length;
  }
  total_ = expected;
}

std::size_t BlockLayout::find(const std::string& name) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    if (blocks_[i].name == name) return i;
  throw StructuralError("no block named '" + name + "'");
}

template <typename Real>
ParamVector<Real>::ParamVector(BlockLayout layout, std::vector<Real> data)
    : layout_(std::move(layout)), data_(std::move(data)) {
  if (data_.size() != layout_.total()) {
    std::ostringstream os;
    os << "parameter data has " << data_.size() << " values, layout covers "
       << layout_.total();
    throw StructuralError(os.str());
  }
}

template class ParamVector<float>;
template class ParamVector<double>;

const char* to_string(FragmentPattern p) {
  return p == FragmentPattern::kSequential ? "sequential" : "strided";
}

FragmentPattern parse_fragment_pattern(const std::string& s) {
  if (s == "sequential") return FragmentPattern::kSequential;
  if (s == "strided") return FragmentPattern::kStrided;
  throw ConfigError("unknown fragment pattern '" + s + "' (expected sequential|strided)");
}

long FragmentSpec::first_send(std::size_t p) const {
  if (!has_offsets()) throw ScheduleError("fragment offsets not assigned");
  return period + offsets.at(p);
}

FragmentSpec partition(std::size_t num_blocks, std::size_t fragment_size,
                       FragmentPattern pattern) {
  if (num_blocks == 0 || fragment_size == 0 || num_blocks % fragment_size != 0) {
    std::ostringstream os;
    os << "fragment_size " << fragment_size << " must divide num_blocks " << num_blocks
       << " (both >= 1)";
    throw ConfigError(os.str());
  }
  FragmentSpec spec;
  spec.num_blocks = num_blocks;
  spec.fragment_size = fragment_size;
  spec.pattern = pattern;
  const std::size_t P = num_blocks / fragment_size;
  spec.fragments.assign(P, {});
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t k = 0; k < fragment_size; ++k) {
      spec.fragments[p].push_back(pattern == FragmentPattern::kSequential
                                      ? p * fragment_size + k
                                      : p + k * P);
    }
  }
  return spec;
}

FragmentSpec assign_offsets(FragmentSpec spec, long period) {
  const long P = static_cast<long>(spec.num_fragments());
  if (period < 1 || period < P) {
    std::ostringstream os;
    os << "H=" << period << " must be >= 1 and >= the number of fragments P=" << P;
    throw ConfigError(os.str());
  }
  spec.period = period;
  spec.offsets.resize(spec.num_fragments());
  for (long p = 0; p < P; ++p) spec.offsets[p] = p * period / P;
  return spec;
}

std::vector<std::vector<IndexRange>> fragment_ranges(
    const FragmentSpec& spec, const BlockLayout& layout,
    std::span<const std::size_t> sync_blocks) {
  if (sync_blocks.size() != spec.num_blocks) {
    std::ostringstream os;
    os << "fragment spec covers " << spec.num_blocks << " blocks, model has "
       << sync_blocks.size();
    throw StructuralError(os.str());
  }
  const std::size_t P = spec.num_fragments();
  std::vector<std::vector<IndexRange>> out(P);

  std::vector<bool> is_sync(layout.num_blocks(), false);
  for (std::size_t b : sync_blocks) is_sync.at(b) = true;

  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t l : spec.fragments[p]) {
      const Block& b = layout.block(sync_blocks[l]);
      out[p].push_back({b.start, b.end()});
    }

  // Non-block parameters, in layout order, split into P near-equal chunks.
  std::vector<IndexRange> rest;
  std::size_t rest_total = 0;
  for (std::size_t i = 0; i < layout.num_blocks(); ++i) {
    if (is_sync[i]) continue;
    rest.push_back({layout.block(i).start, layout.block(i).end()});
    rest_total += layout.block(i).length;
  }
  std::size_t cursor = 0;  // position inside the concatenated rest
  std::size_t seg = 0;
  std::size_t seg_pos = 0;
  for (std::size_t p = 0; p < P; ++p) {
    const std::size_t chunk_end = (p + 1) * rest_total / P;
    while (cursor < chunk_end) {
      const IndexRange& r = rest[seg];
      const std::size_t take = std::min(r.size() - seg_pos, chunk_end - cursor);
      out[p].push_back({r.begin + seg_pos, r.begin + seg_pos + take});
      cursor += take;
      seg_pos += take;
      if (seg_pos == r.size()) {
        ++seg;
        seg_pos = 0;
      }
    }
  }

  for (auto& ranges : out) {
    std::sort(ranges.begin(), ranges.end(),
              [](const IndexRange& a, const IndexRange& b) { return a.begin < b.begin; });
    std::vector<IndexRange> merged;
    for (const IndexRange& r : ranges) {
      if (r.size() == 0) continue;
      if (!merged.empty() && merged.back().end == r.begin)
        merged.back().end = r.end;
      else
        merged.push_back(r);
    }
    ranges = std::move(merged);
  }
  return out;
}

std::size_t total_size(std::span<const IndexRange> ranges) {
  std::size_t n = 0;
  for (const IndexRange& r : ranges) n += r.size();
  return n;
}

}  // namespace sdlab
