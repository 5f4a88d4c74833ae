#pragma once

// Band partitioning of a (centrally shifted) H x W spectrum into d = H*W/(h*w)
// contiguous h x w tiles. Group g = gy * (W/w) + gx holds its tile flattened
// row-major, so unfold yields a d x (h*w) token matrix.

#include <memory>
#include <string>
#include <vector>

#include "freqdeno/ops.hpp"

namespace freqdeno {

struct PartitionSpec {
  std::size_t h = 1;       ///< vertical stride
  std::size_t w = 1;       ///< horizontal stride
  std::size_t height = 1;  ///< spectrum extent H
  std::size_t width = 1;   ///< spectrum extent W

  /// Validated constructor; throws ConfigError naming the dimension that does not divide.
  static PartitionSpec make(std::size_t height, std::size_t width, std::size_t h, std::size_t w) {
    if (h == 0 || w == 0) throw ConfigError("partition stride must be positive");
    if (height == 0 || width == 0) throw ConfigError("partition extents must be positive");
    if (height % h != 0)
      throw ConfigError("partition stride h=" + std::to_string(h) + " does not divide height H=" +
                        std::to_string(height));
    if (width % w != 0)
      throw ConfigError("partition stride w=" + std::to_string(w) + " does not divide width W=" +
                        std::to_string(width));
    return PartitionSpec{h, w, height, width};
  }

  static PartitionSpec square(std::size_t height, std::size_t width, std::size_t stride) {
    return make(height, width, stride, stride);
  }

  std::size_t groups() const noexcept { return (height / h) * (width / w); }
  std::size_t tokens() const noexcept { return h * w; }

  friend bool operator==(const PartitionSpec&, const PartitionSpec&) = default;
};

struct BandGrouping {
  Var tokens;  ///< d x (h*w)
  PartitionSpec spec;
  bool shifted = true;  ///< whether the source map was centrally shifted
};

/// unfold_index()[g * (h*w) + t] is the flat source index of token t in group g.
inline IndexMap unfold_index(const PartitionSpec& spec) {
  const std::size_t gx_count = spec.width / spec.w;
  const std::size_t n = spec.tokens();
  auto idx = std::make_shared<std::vector<std::size_t>>(spec.height * spec.width);
  for (std::size_t g = 0; g < spec.groups(); ++g) {
    const std::size_t gy = g / gx_count, gx = g % gx_count;
    for (std::size_t ty = 0; ty < spec.h; ++ty)
      for (std::size_t tx = 0; tx < spec.w; ++tx)
        (*idx)[g * n + ty * spec.w + tx] = (gy * spec.h + ty) * spec.width + gx * spec.w + tx;
  }
  return idx;
}

inline IndexMap fold_index(const PartitionSpec& spec) {
  const auto fwd = unfold_index(spec);
  auto inv = std::make_shared<std::vector<std::size_t>>(fwd->size());
  for (std::size_t i = 0; i < fwd->size(); ++i) (*inv)[(*fwd)[i]] = i;
  return inv;
}

inline BandGrouping unfold(Var map, const PartitionSpec& spec, bool shifted = true) {
  const Tensor& v = detail::tape_of(map).value(map);
  if (v.rank() != 2) throw ShapeError("unfold: expected H x W map, got " + to_string(v.shape()));
  const auto checked = PartitionSpec::make(v.dim(0), v.dim(1), spec.h, spec.w);
  return {gather(map, unfold_index(checked), Shape{checked.groups(), checked.tokens()}), checked, shifted};
}

inline Var fold(const BandGrouping& groups) {
  const Tensor& v = detail::tape_of(groups.tokens).value(groups.tokens);
  const auto& spec = groups.spec;
  if (v.size() != spec.height * spec.width || v.rank() != 2 || v.dim(0) != spec.groups() ||
      v.dim(1) != spec.tokens())
    throw ShapeError("fold: token tensor " + to_string(v.shape()) + " does not match partition " +
                     std::to_string(spec.groups()) + " x " + std::to_string(spec.tokens()));
  return gather(groups.tokens, fold_index(spec), Shape{spec.height, spec.width});
}

}  // namespace freqdeno
