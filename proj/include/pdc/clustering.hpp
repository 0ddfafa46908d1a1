// Thresholded PSF masks and their split into signal / interference parts.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "pdc/core_model.hpp"
#include "pdc/sparse_psf.hpp"

namespace pdc {

struct MaskPair {
  Mask signal;
  Mask interference;

  Mask combined() const { return signal || interference; }
  bool disjoint() const { return !(signal && interference).any(); }
};

/// true exactly where γ ≥ ι.
inline Mask build_mask(const Psf& psf, double iota) {
  if (!(iota >= 0.0)) throw domain_error("build_mask: threshold must be >= 0");
  Mask m(psf.angle_size, psf.delay_size);
  for (int j = 0; j < psf.delay_size; ++j)
    for (int i = 0; i < psf.angle_size; ++i) {
      const double v = psf(i, j);
      // ι = 0 selects the support only.
      m(i, j) = iota == 0.0 ? v > 0.0 : v >= iota;
    }
  return m;
}

/// ι = max(0.02 max γ, 3 median of the nonzero weights).
inline double default_threshold(const Psf& psf, double relative = 0.02, double median_factor = 3.0) {
  std::vector<double> nz;
  for (long l = 0; l < psf.weights.size(); ++l)
    if (psf.weights[l] > 0.0) nz.push_back(psf.weights[l]);
  if (nz.empty()) return 0.0;
  const auto mid = nz.begin() + static_cast<long>(nz.size() / 2);
  std::nth_element(nz.begin(), mid, nz.end());
  const double median = *mid;
  return std::max(relative * psf.weights.maxCoeff(), median_factor * median);
}

/// Signal = mask ∩ {τ ≤ τ0}, interference = mask ∩ {τ > τ0}.
inline MaskPair cluster_by_delay(const Psf& psf, const AngleDelayGrid& grid, double tau0, double iota) {
  if (psf.angle_size != grid.angle_size() || psf.delay_size != grid.delay_size())
    throw shape_error("cluster_by_delay: PSF does not match grid");
  if (!(tau0 >= 0.0)) throw domain_error("cluster_by_delay: tau0 must be >= 0");
  const Mask mask = build_mask(psf, iota);
  MaskPair out{Mask::Constant(psf.angle_size, psf.delay_size, false), Mask::Constant(psf.angle_size, psf.delay_size, false)};
  for (int j = 0; j < psf.delay_size; ++j) {
    const bool near = grid.delay_points()[j] <= tau0;
    for (int i = 0; i < psf.angle_size; ++i) {
      if (!mask(i, j)) continue;
      (near ? out.signal : out.interference)(i, j) = true;
    }
  }
  return out;
}

inline MaskPair cluster_by_delay(const Psf& psf, const AngleDelayGrid& grid, double tau0) {
  return cluster_by_delay(psf, grid, tau0, default_threshold(psf));
}

/// Inclusive index box on the grid.
struct Rectangle {
  int angle_lo = 0, angle_hi = -1;
  int delay_lo = 0, delay_hi = -1;

  bool contains(int i, int j) const { return i >= angle_lo && i <= angle_hi && j >= delay_lo && j <= delay_hi; }
};

struct ClusterHypothesis {
  std::vector<Rectangle> rectangles;
  std::vector<Mask> members;  ///< disjoint component memberships, one per rectangle
  std::vector<double> mass;
  std::vector<double> centroid_delay_index;
  int selected_signal_index = -1;

  int size() const { return static_cast<int>(rectangles.size()); }

  /// Rectangle `index` as the signal mask, all other groups as interference.
  MaskPair masks(int index) const {
    if (index < 0 || index >= size()) throw std::out_of_range("ClusterHypothesis: index out of range");
    MaskPair out{members[index], Mask::Constant(members[index].rows(), members[index].cols(), false)};
    for (int g = 0; g < size(); ++g)
      if (g != index) out.interference = out.interference || members[g];
    return out;
  }
};

/// 8-connected components of `mask` (no wrap on either axis), merged to at most
/// k groups by nearest γ-weighted centroid, ordered by descending mass then
/// smaller centroid delay.
inline ClusterHypothesis partition_rectangles(const Psf& psf, const Mask& mask, int k) {
  if (k < 1) throw domain_error("partition_rectangles: k must be >= 1");
  if (mask.rows() != psf.angle_size || mask.cols() != psf.delay_size)
    throw shape_error("partition_rectangles: mask does not match PSF");
  if (!mask.any()) throw domain_error("partition_rectangles: empty mask");

  const int ga = psf.angle_size;
  const int gd = psf.delay_size;
  Eigen::ArrayXXi label = Eigen::ArrayXXi::Constant(ga, gd, -1);
  struct Group {
    std::vector<std::pair<int, int>> cells;
    double ci = 0.0, cj = 0.0;  // γ-weighted centroid
  };
  std::vector<Group> groups;
  std::vector<std::pair<int, int>> stack;
  for (int j = 0; j < gd; ++j)
    for (int i = 0; i < ga; ++i) {
      if (!mask(i, j) || label(i, j) >= 0) continue;
      const int id = static_cast<int>(groups.size());
      groups.emplace_back();
      label(i, j) = id;
      stack.assign(1, {i, j});
      while (!stack.empty()) {
        auto [ci, cj] = stack.back();
        stack.pop_back();
        groups[id].cells.emplace_back(ci, cj);
        for (int dj = -1; dj <= 1; ++dj)
          for (int di = -1; di <= 1; ++di) {
            const int ni = ci + di, nj = cj + dj;
            if (ni < 0 || nj < 0 || ni >= ga || nj >= gd) continue;
            if (mask(ni, nj) && label(ni, nj) < 0) {
              label(ni, nj) = id;
              stack.emplace_back(ni, nj);
            }
          }
      }
    }

  auto centroid = [&](const Group& g) {
    double m = 0.0, si = 0.0, sj = 0.0;
    for (auto [i, j] : g.cells) {
      // Tiny floor keeps all-zero groups (ι = 0 masks) well defined.
      const double w = std::max(psf(i, j), 0.0) + 1e-300;
      m += w;
      si += w * i;
      sj += w * j;
    }
    return std::array<double, 3>{m, si / m, sj / m};
  };
  for (auto& g : groups) {
    const auto c = centroid(g);
    g.ci = c[1];
    g.cj = c[2];
  }
  while (static_cast<int>(groups.size()) > k) {
    std::size_t best_a = 0, best_b = 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < groups.size(); ++a)
      for (std::size_t b = a + 1; b < groups.size(); ++b) {
        const double d = std::hypot(groups[a].ci - groups[b].ci, groups[a].cj - groups[b].cj);
        if (d < best) {
          best = d;
          best_a = a;
          best_b = b;
        }
      }
    auto& keep = groups[best_a];
    keep.cells.insert(keep.cells.end(), groups[best_b].cells.begin(), groups[best_b].cells.end());
    groups.erase(groups.begin() + static_cast<long>(best_b));
    const auto c = centroid(keep);
    keep.ci = c[1];
    keep.cj = c[2];
  }

  ClusterHypothesis out;
  std::vector<std::size_t> order(groups.size());
  std::vector<double> mass(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    order[g] = g;
    double m = 0.0;
    for (auto [i, j] : groups[g].cells) m += psf(i, j);
    mass[g] = m;
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (mass[a] != mass[b]) return mass[a] > mass[b];
    return groups[a].cj < groups[b].cj;
  });
  for (std::size_t g : order) {
    Rectangle r{ga, -1, gd, -1};
    Mask member = Mask::Constant(ga, gd, false);
    for (auto [i, j] : groups[g].cells) {
      r.angle_lo = std::min(r.angle_lo, i);
      r.angle_hi = std::max(r.angle_hi, i);
      r.delay_lo = std::min(r.delay_lo, j);
      r.delay_hi = std::max(r.delay_hi, j);
      member(i, j) = true;
    }
    out.rectangles.push_back(r);
    out.members.push_back(std::move(member));
    out.mass.push_back(mass[g]);
    out.centroid_delay_index.push_back(groups[g].cj);
  }
  return out;
}

struct OracleVerdict {
  bool success = false;
  double achieved_rate = 0.0;
};

struct Selection {
  bool accepted = false;  ///< false: every hypothesis failed, the packet is rejected
  int index = -1;
  MaskPair masks;
  std::vector<OracleVerdict> verdicts;  ///< in evaluation order, up to the first success
};

/// Tries each rectangle as the signal cluster in canonical order and returns
/// the first one the oracle accepts. `oracle` maps a MaskPair to a verdict.
inline Selection supervised_select(const ClusterHypothesis& hypothesis,
                                   const std::function<OracleVerdict(const MaskPair&)>& oracle) {
  if (hypothesis.size() < 1) throw domain_error("supervised_select: no rectangles");
  Selection out;
  for (int i = 0; i < hypothesis.size(); ++i) {
    MaskPair masks = hypothesis.masks(i);
    out.verdicts.push_back(oracle(masks));
    if (out.verdicts.back().success) {
      out.accepted = true;
      out.index = i;
      out.masks = std::move(masks);
      return out;
    }
  }
  return out;
}

}  // namespace pdc
