// Independent oracles shared by the unit tests and the acceptance runner.
#pragma once

#include <Eigen/QR>
#include <cmath>
#include <vector>

#include "pdc/pdc.hpp"

namespace pdc::testing {

/// Row-wise prox of α‖·‖_{2,1} by direct numerical minimization. For each
/// row r the objective ½‖x - r‖² + α‖x‖ is minimized over x = s r / ‖r‖
/// (Cauchy-Schwarz fixes the direction for any given norm s). The 1-D
/// convex problem in s ∈ [0, ‖r‖] is solved by bisection on the sign of a
/// central finite-difference slope.
inline CMat numeric_prox_l21(const CMat& r, double alpha) {
  CMat out = CMat::Zero(r.rows(), r.cols());
  for (long i = 0; i < r.rows(); ++i) {
    const double nr = r.row(i).norm();
    if (nr == 0.0) continue;
    auto f = [&](double s) { return 0.5 * (s - nr) * (s - nr) + alpha * std::abs(s); };
    const double h = 1e-4 * (1.0 + nr);
    auto slope = [&](double s) { return (f(s + h) - f(s - h)) / (2.0 * h); };
    double s = 0.0;
    if (f(h) - f(0.0) < 0.0) {
      double a = 0.0, b = nr;
      for (int it = 0; it < 200 && b - a > 1e-15 * nr; ++it) {
        const double mid = 0.5 * (a + b);
        (slope(mid) > 0.0 ? b : a) = mid;
      }
      s = 0.5 * (a + b);
    }
    out.row(i) = r.row(i) * (s / nr);
  }
  return out;
}

inline double prox_objective(const CMat& x, const CMat& r, double alpha) {
  return 0.5 * (x - r).squaredNorm() + alpha * l21_norm(x);
}

/// Dense mask-constrained least squares: minimize ‖X - 𝕊 F^H (P_f + Q_f)‖²
/// over transform coefficients supported on the signal and interference
/// masks; returns the signal part F^H P_f and whether the system has full
/// column rank.
struct LsqOracle {
  CMat signal;
  bool full_rank = false;
};

inline LsqOracle masked_least_squares(const Dictionary& dict, const CMat& x, const SamplingPattern& pattern,
                                      const MaskPair& masks) {
  const auto& g = dict.grid();
  const int M = g.num_antennas(), N = g.num_subcarriers();
  const auto idx = pattern.flat_indices(M);
  std::vector<long> sig, itf;
  for (long l = 0; l < g.size(); ++l) {
    if (masks.signal(g.angle_index(l), g.delay_index(l))) sig.push_back(l);
    if (masks.interference(g.angle_index(l), g.delay_index(l))) itf.push_back(l);
  }
  // Columns of (F^ovs)^H restricted to the masks, rows restricted to the samples.
  const double s = std::sqrt(static_cast<double>(dict.rows()) / static_cast<double>(dict.cols()));
  auto column = [&](long l) { return CVec(steering(g, l) / std::sqrt(static_cast<double>(dict.rows())) * s); };
  const long k = static_cast<long>(idx.size());
  CMat b(k, static_cast<long>(sig.size() + itf.size()));
  long col = 0;
  for (const auto* set : {&sig, &itf})
    for (long l : *set) {
      const CVec v = column(l);
      for (long r = 0; r < k; ++r) b(r, col) = v[idx[r]];
      ++col;
    }
  CVec rhs(k);
  for (long r = 0; r < k; ++r) rhs[r] = x(r % pattern.m(), r / pattern.m());
  Eigen::ColPivHouseholderQR<CMat> qr(b);
  qr.setThreshold(1e-10);
  LsqOracle out;
  out.full_rank = qr.rank() == b.cols();
  const CVec coef = qr.solve(rhs);
  CVec h = CVec::Zero(static_cast<long>(M) * N);
  for (std::size_t i = 0; i < sig.size(); ++i) h += coef[static_cast<long>(i)] * column(sig[i]);
  out.signal = Eigen::Map<const CMat>(h.data(), M, N);
  return out;
}

/// Random disjoint masks with `per_mask` atoms each.
inline MaskPair random_disjoint_masks(const AngleDelayGrid& g, int per_mask, Rng& rng) {
  const auto picks = sample_without_replacement(rng, static_cast<int>(g.size()), 2 * per_mask);
  std::vector<int> order = picks;
  // sample_without_replacement returns sorted indices; shuffle the split.
  for (std::size_t i = order.size() - 1; i > 0; --i)
    std::swap(order[i], order[uniform_index(rng, i + 1)]);
  MaskPair m{Mask::Constant(g.angle_size(), g.delay_size(), false), Mask::Constant(g.angle_size(), g.delay_size(), false)};
  for (int i = 0; i < 2 * per_mask; ++i)
    (i < per_mask ? m.signal : m.interference)(g.angle_index(order[i]), g.delay_index(order[i])) = true;
  return m;
}

inline ArrayConfig array_of(int m, double max_aoa = kPi / 3.0) {
  ArrayConfig a;
  a.num_antennas = m;
  a.max_aoa = max_aoa;
  return a;
}

inline OfdmConfig ofdm_of(int n, int block = 1) {
  OfdmConfig o;
  o.num_subcarriers = n;
  o.coherence_block_subcarriers = block;
  return o;
}

}  // namespace pdc::testing
