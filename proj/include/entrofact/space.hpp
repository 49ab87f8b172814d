#pragma once

#include "entrofact/common.hpp"

#include <cstdint>
#include <numeric>
#include <vector>

namespace entrofact {

// Subsets of sites are bitmasks over at most 64 sites.
using BlockMask = std::uint64_t;

inline std::vector<int> mask_sites(BlockMask mask) {
  std::vector<int> sites;
  for (int i = 0; mask != 0; ++i, mask >>= 1)
    if (mask & 1u) sites.push_back(i);
  return sites;
}

// Finite product space: site k carries a spin in [arity_k]. Configurations
// are enumerated in mixed radix with site 0 varying fastest. Indicator
// ("one-hot") coordinates are laid out site-major, value-minor, so site k
// occupies the contiguous range [offset(k), offset(k)+arity_k).
class StateSpace {
 public:
  StateSpace() = default;

  explicit StateSpace(std::vector<int> arity) : arity_(std::move(arity)) {
    offsets_.resize(arity_.size() + 1, 0);
    strides_.resize(arity_.size() + 1, 1);
    for (std::size_t k = 0; k < arity_.size(); ++k) {
      require(arity_[k] >= 1, "StateSpace: site arity must be >= 1");
      offsets_[k + 1] = offsets_[k] + arity_[k];
      strides_[k + 1] = strides_[k] * static_cast<std::size_t>(arity_[k]);
    }
  }

  static StateSpace uniform(int n, int q) {
    require(n >= 1, "StateSpace: need n >= 1");
    require(q >= 2, "StateSpace: need q >= 2");
    return StateSpace(std::vector<int>(n, q));
  }

  int sites() const { return static_cast<int>(arity_.size()); }
  int arity(int site) const { return arity_[site]; }
  const std::vector<int>& arities() const { return arity_; }

  // Number of configurations.
  std::size_t size() const { return strides_.back(); }
  // Total indicator dimension (sum of arities).
  int dim() const { return offsets_.back(); }

  int offset(int site) const { return offsets_[site]; }
  std::size_t stride(int site) const { return strides_[site]; }

  // 0-based spin value of `site` in configuration `idx`.
  int value(std::size_t idx, int site) const {
    return static_cast<int>((idx / strides_[site]) % arity_[site]);
  }

  // Indicator coordinate of (site, 0-based value).
  int coord(int site, int value0) const { return offsets_[site] + value0; }

  BlockMask full_mask() const {
    return sites() == 64 ? ~BlockMask(0) : (BlockMask(1) << sites()) - 1;
  }

  bool same_shape(const StateSpace& other) const { return arity_ == other.arity_; }

 private:
  std::vector<int> arity_;
  std::vector<int> offsets_;       // prefix sums of arity
  std::vector<std::size_t> strides_;  // mixed-radix strides
};

// Decomposition of the configuration space along a block A: every index
// splits uniquely as out_base[o] + in_off[i], where o enumerates the spins
// outside A (the fiber label) and i the spins inside A.
struct FiberIndex {
  std::vector<std::size_t> out_base;
  std::vector<std::size_t> in_off;

  FiberIndex(const StateSpace& space, BlockMask block) {
    require((block & ~space.full_mask()) == 0, "block mask names sites beyond the space");
    std::vector<int> in_sites, out_sites;
    for (int k = 0; k < space.sites(); ++k)
      ((block >> k) & 1u ? in_sites : out_sites).push_back(k);
    out_base = enumerate(space, out_sites);
    in_off = enumerate(space, in_sites);
  }

  std::size_t fibers() const { return out_base.size(); }
  std::size_t fiber_size() const { return in_off.size(); }

 private:
  static std::vector<std::size_t> enumerate(const StateSpace& space,
                                            const std::vector<int>& sites) {
    std::size_t count = 1;
    for (int k : sites) count *= static_cast<std::size_t>(space.arity(k));
    std::vector<std::size_t> result(count);
    std::vector<int> digits(sites.size(), 0);
    for (std::size_t r = 0; r < count; ++r) {
      std::size_t idx = 0;
      for (std::size_t d = 0; d < sites.size(); ++d)
        idx += static_cast<std::size_t>(digits[d]) * space.stride(sites[d]);
      result[r] = idx;
      for (std::size_t d = 0; d < sites.size(); ++d) {
        if (++digits[d] < space.arity(sites[d])) break;
        digits[d] = 0;
      }
    }
    return result;
  }
};

}  // namespace entrofact
