#pragma once

// Symbolic coding of the skew product by the rectangle alphabet {0, ..., k*l - 1}.
//
// Rectangle symbol s = i * l + j, with base symbol i = floor(F(x) - x0) mod k and
// fiber symbol j = floor(G(y) + h(x) - y0) mod l, where F and G are the lifts of
// the base map and of the fiber shape and h is the coupling. Each rectangle is
// mapped by T one-to-one onto the torus minus S_0, so every word is admissible.

#include <span>
#include <vector>

#include "dimclt/map_models.hpp"

namespace dimclt {

using Word = std::vector<int>;

class RectCoding {
 public:
  RectCoding() = default;
  RectCoding(SkewMap map, TorusPoint anchor) : map_(map), anchor_(anchor) {}

  const SkewMap& map() const { return map_; }
  const TorusPoint& anchor() const { return anchor_; }
  int alphabet() const { return map_.alphabet(); }

  int base_symbol(double x) const {
    const int k = map_.k();
    int i = static_cast<int>(std::floor(map_.base().lift(wrap01(x)) - anchor_.x));
    return ((i % k) + k) % k;
  }
  int fiber_symbol(const TorusPoint& p) const {
    const int l = map_.l();
    int j = static_cast<int>(std::floor(map_.fiber_shape().lift(p.y) + map_.coupling(p.x) - anchor_.y));
    return ((j % l) + l) % l;
  }
  int symbol(const TorusPoint& p) const { return base_symbol(p.x) * map_.l() + fiber_symbol(p); }

  int base_of(int rect_symbol) const { return rect_symbol / map_.l(); }
  int fiber_of(int rect_symbol) const { return rect_symbol % map_.l(); }

  /// Base preimage of x in cell i (real lift value, not reduced).
  double base_preimage_lift(int i, double offset) const {
    return map_.base().inverse_lift(anchor_.x + i + offset);
  }
  double base_preimage(int i, double x) const {
    return wrap01(base_preimage_lift(i, wrap01(x - anchor_.x)));
  }
  /// Fiber preimage over the base point x_pre, fiber cell j.
  double fiber_preimage_lift(double x_pre, int j, double offset) const {
    return map_.fiber_shape().inverse_lift(anchor_.y + j + offset - map_.coupling(x_pre));
  }
  double fiber_preimage(double x_pre, int j, double y) const {
    return wrap01(fiber_preimage_lift(x_pre, j, wrap01(y - anchor_.y)));
  }

  /// The inverse branch of T onto rectangle `s`.
  TorusPoint preimage(int s, const TorusPoint& q) const {
    const double x = base_preimage(base_of(s), q.x);
    return TorusPoint(x, fiber_preimage(x, fiber_of(s), q.y));
  }

  /// Nested-cylinder decoding: Psi_{w_0} o ... o Psi_{w_{n-1}}(seed).
  TorusPoint decode(std::span<const int> word, TorusPoint seed) const {
    for (auto it = word.rbegin(); it != word.rend(); ++it) seed = preimage(*it, seed);
    return seed;
  }
  /// Decoding with the seed at the centre of the image torus (opposite the cut S_0).
  TorusPoint decode(std::span<const int> word) const { return decode(word, center_seed()); }
  TorusPoint center_seed() const { return TorusPoint(anchor_.x + 0.5, anchor_.y + 0.5); }

  /// Rectangle coding of the first n iterates, by forward orbit iteration.
  Word code(TorusPoint p, int n) const {
    Word w;
    w.reserve(n);
    for (int j = 0; j < n; ++j) {
      w.push_back(symbol(p));
      p = map_.apply(p);
    }
    return w;
  }
  Word base_code(double x, int n) const {
    Word w;
    w.reserve(n);
    for (int j = 0; j < n; ++j) {
      w.push_back(base_symbol(x));
      x = map_.base()(x);
    }
    return w;
  }

  /// Number of rectangle symbols needed so that the decoded point is within
  /// roughly 2^-bits of the true point.
  int resolution_depth(int bits = 40) const {
    const double contraction =
        std::min(map_.base().min_derivative(), map_.fiber_shape().min_derivative());
    return static_cast<int>(std::ceil(bits * std::log(2.0) / std::log(contraction))) + 2;
  }

 private:
  SkewMap map_;
  TorusPoint anchor_;
};

}  // namespace dimclt
