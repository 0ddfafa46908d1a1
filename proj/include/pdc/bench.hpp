// Per-iteration timing of the transform-based kernels over a sweep of grid sizes.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "pdc/decontam.hpp"
#include "pdc/sparse_psf.hpp"

namespace pdc {

enum class BenchComponent { solver, admm, dictionary };

struct BenchPoint {
  long grid_size = 0;  ///< G
  double seconds_per_iteration = 0.0;
};

/// Square array M = N with G = 4 M N, or M = 2N when log2 G is odd.
inline AngleDelayGrid bench_grid(int log2_g) {
  if (log2_g < 4) throw domain_error("bench_grid: log2 G must be >= 4");
  const int log2_mn = log2_g - 2;
  const int log2_n = log2_mn / 2;
  ArrayConfig arr;
  arr.num_antennas = 1 << (log2_mn - log2_n);
  OfdmConfig ofdm;
  ofdm.num_subcarriers = 1 << log2_n;
  ofdm.coherence_block_subcarriers = 1;
  return AngleDelayGrid(arr, ofdm);
}

namespace bench_detail {

/// Median over `reps` runs of the mean time per call, each run long enough to
/// cover `min_seconds`.
template <class F>
double time_per_call(F&& f, double min_seconds, int reps = 5) {
  using clock = std::chrono::steady_clock;
  f();
  int calls = 1;
  for (;;) {
    const auto t0 = clock::now();
    for (int i = 0; i < calls; ++i) f();
    const double dt = std::chrono::duration<double>(clock::now() - t0).count();
    if (dt >= min_seconds || calls >= (1 << 20)) break;
    calls *= 2;
  }
  std::vector<double> samples;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = clock::now();
    for (int i = 0; i < calls; ++i) f();
    samples.push_back(std::chrono::duration<double>(clock::now() - t0).count() / calls);
  }
  std::nth_element(samples.begin(), samples.begin() + reps / 2, samples.end());
  return samples[reps / 2];
}

}  // namespace bench_detail

/// One point of the sweep. The solver figure is one gradient step (forward,
/// adjoint and prox) on a window of `window` sketches with 1/4 of the antennas
/// and subcarriers sampled; the ADMM figure is one full iteration.
inline BenchPoint bench_point(BenchComponent component, int log2_g, double min_seconds = 0.05, int window = 4) {
  const AngleDelayGrid grid = bench_grid(log2_g);
  const Dictionary dict(grid);
  const int M = grid.num_antennas();
  const int N = grid.num_subcarriers();
  Rng rng = make_rng(0x62656e6368ULL, {static_cast<std::uint64_t>(log2_g)});
  BenchPoint out{grid.size(), 0.0};

  switch (component) {
    case BenchComponent::dictionary: {
      const CMat u = complex_normal_matrix(rng, grid.angle_size(), grid.delay_size());
      out.seconds_per_iteration = bench_detail::time_per_call(
          [&] {
            const CMat h = dict.synthesize(u);
            const CMat back = dict.analyze(h);
            (void)back;
          },
          min_seconds);
      break;
    }
    case BenchComponent::solver: {
      const int m = std::max(1, M / 4), n = std::max(1, N / 4);
      std::vector<SamplingPattern> patterns;
      for (int c = 0; c < window; ++c) {
        SamplingPattern p;
        p.antenna_indices = sample_without_replacement(rng, M, m);
        p.subcarrier_indices = sample_without_replacement(rng, N, n);
        p.slot = c;
        patterns.push_back(std::move(p));
      }
      const SketchOperator op(dict, patterns);
      const CMat x = complex_normal_matrix(rng, op.sample_size(), window);
      CMat w = CMat::Zero(grid.size(), window);
      out.seconds_per_iteration = bench_detail::time_per_call(
          [&] {
            const CMat grad = op.adjoint(op.forward(w) - x);
            w = prox_l21(w - 1e-3 * grad, 1e-3);
          },
          min_seconds);
      break;
    }
    case BenchComponent::admm: {
      SamplingPattern p;
      p.antenna_indices.resize(M);
      for (int i = 0; i < M; ++i) p.antenna_indices[i] = i;
      for (int j = 0; j < N; j += 2) p.subcarrier_indices.push_back(j);
      const CMat x = complex_normal_matrix(rng, p.m(), p.n());
      MaskPair masks{Mask::Constant(grid.angle_size(), grid.delay_size(), false),
                     Mask::Constant(grid.angle_size(), grid.delay_size(), false)};
      for (int j = 0; j < grid.delay_size(); ++j)
        for (int i = 0; i < grid.angle_size(); ++i) {
          if (uniform01(rng) > 0.1) continue;
          (i < grid.angle_size() / 2 ? masks.signal : masks.interference)(i, j) = true;
        }
      AdmmState state(dict, x, p, masks, 0.2);
      out.seconds_per_iteration = bench_detail::time_per_call([&] { state.step(); }, min_seconds);
      break;
    }
  }
  return out;
}

inline std::vector<BenchPoint> bench_sweep(BenchComponent component, int log2_lo, int log2_hi,
                                           double min_seconds = 0.05) {
  std::vector<BenchPoint> out;
  for (int k = log2_lo; k <= log2_hi; ++k) out.push_back(bench_point(component, k, min_seconds));
  return out;
}

/// Least-squares slope of log t against log G.
inline double loglog_slope(const std::vector<BenchPoint>& points) {
  if (points.size() < 2) throw domain_error("loglog_slope: need at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(points.size());
  for (const auto& p : points) {
    const double x = std::log(static_cast<double>(p.grid_size));
    const double y = std::log(p.seconds_per_iteration);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Largest relative deviation between the transform-based dictionary and its
/// dense matrix, over apply and adjoint on random inputs.
inline double dictionary_agreement(const AngleDelayGrid& grid, std::uint64_t seed = 7) {
  const Dictionary dict(grid);
  const CMat a = dict.dense();
  Rng rng = make_rng(seed, {static_cast<std::uint64_t>(grid.size())});
  const CVec x = complex_normal_vector(rng, dict.cols());
  const CVec y = complex_normal_vector(rng, dict.rows());
  const CVec ax = a * x;
  const CVec ahy = a.adjoint() * y;
  return std::max((dict.apply(x) - ax).norm() / ax.norm(), (dict.adjoint(y) - ahy).norm() / ahy.norm());
}

}  // namespace pdc
