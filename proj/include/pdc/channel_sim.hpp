// Ground-truth multipath channels (one-ring scattering), sampling patterns and
// noisy, noise-normalized pilot sketches.
#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "pdc/core_model.hpp"
#include "pdc/rng.hpp"

namespace pdc {

using Vec2 = Eigen::Vector2d;

struct MultipathComponent {
  double aoa = 0.0;    ///< θ [rad], relative to array broadside
  double delay = 0.0;  ///< τ [s]
  double power = 0.0;  ///< σ² (linear, relative to the noise floor)
};

struct ChannelRealization {
  CMat matrix;  ///< H_s, M x N
  long slot = 0;
};

/// Base-station sector: array position and boresight azimuth [rad].
struct BsSite {
  Vec2 position = Vec2::Zero();
  double boresight = 0.0;
};

struct UserGeometry {
  Vec2 position = Vec2::Zero();
  double ring_radius = 150.0;  ///< R_one-ring [m]
  int num_mpcs = 50;           ///< L

  double distance_to(const Vec2& bs) const { return (position - bs).norm(); }
};

/// Wraps an angle to (-π, π].
inline double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a <= 0.0) a += 2.0 * kPi;
  return a - kPi;
}

/// Azimuth of `p` seen from `site`, relative to the site's boresight.
inline double relative_bearing(const BsSite& site, const Vec2& p) {
  const Vec2 d = p - site.position;
  return wrap_angle(std::atan2(d.y(), d.x()) - site.boresight);
}

/// SNR(r) = SNR_max / (1 + (r / r0)^η).
inline double snr_before_beamforming(double r, double eta, double r0, double snr_max) {
  if (r < 0.0) throw domain_error("snr_before_beamforming: negative distance");
  return snr_max / (1.0 + std::pow(r / r0, eta));
}

struct SnrModel {
  double snr_max = 1.0;
  double r0 = 500.0;
  double eta = 3.2;

  double operator()(double r) const { return snr_before_beamforming(r, eta, r0, snr_max); }

  /// SNR_max chosen so that SNR(cell_radius) = snr_min.
  static SnrModel calibrated(double cell_radius, double snr_min, double eta, double r0) {
    return {snr_min * (1.0 + std::pow(cell_radius / r0, eta)), r0, eta};
  }

  /// Model with exponent `eta` matching `reference` at distance `anchor`.
  static SnrModel matched(const SnrModel& reference, double eta, double anchor) {
    return {reference(anchor) * (1.0 + std::pow(anchor / reference.r0, eta)), reference.r0, eta};
  }
};

/// Handling of scatterer paths that leave the sector span or the delay range.
enum class OutOfRange { error, drop };

/// One-ring model: L equal-power scatterers uniformly on a ring around the
/// user, starting at azimuth `ring_phase`. Delay = (|BS - scatterer| + R) / c0.
inline std::vector<MultipathComponent> one_ring_mpcs(const UserGeometry& user, const BsSite& site,
                                                     const SnrModel& snr, const ArrayConfig& arr,
                                                     const OfdmConfig& ofdm, double ring_phase = 0.0,
                                                     OutOfRange policy = OutOfRange::error) {
  if (user.num_mpcs < 1) throw domain_error("one_ring_mpcs: num_mpcs must be >= 1");
  if (!(user.ring_radius >= 0.0)) throw domain_error("one_ring_mpcs: negative ring radius");
  const double power = snr(user.distance_to(site.position)) / user.num_mpcs;
  std::vector<MultipathComponent> out;
  out.reserve(user.num_mpcs);
  for (int l = 0; l < user.num_mpcs; ++l) {
    const double phi = ring_phase + 2.0 * kPi * l / user.num_mpcs;
    const Vec2 scatterer = user.position + user.ring_radius * Vec2(std::cos(phi), std::sin(phi));
    MultipathComponent c;
    c.aoa = relative_bearing(site, scatterer);
    c.delay = ((scatterer - site.position).norm() + user.ring_radius) / kSpeedOfLight;
    c.power = power;
    const bool in_range = std::abs(c.aoa) <= arr.max_aoa && c.delay >= 0.0 && c.delay < ofdm.max_delay;
    if (!in_range) {
      if (policy == OutOfRange::error)
        throw geometry_error("one_ring_mpcs: scatterer path outside the sector span or delay range");
      continue;
    }
    out.push_back(c);
  }
  return out;
}

/// H_s = Σ_l ρ_l a(θ_l) b(τ_l)^H with ρ_l ~ CN(0, σ_l²).
inline ChannelRealization realize_channel(const std::vector<MultipathComponent>& mpcs, const ArrayConfig& arr,
                                          const OfdmConfig& ofdm, Rng& rng, long slot = 0) {
  const int m = arr.num_antennas;
  const int n = ofdm.num_subcarriers;
  const long l = static_cast<long>(mpcs.size());
  ChannelRealization out{CMat::Zero(m, n), slot};
  if (l == 0) return out;
  CMat a(m, l);
  CMat b(n, l);
  const double s = std::sin(arr.max_aoa);
  for (long i = 0; i < l; ++i) {
    const cplx rho = complex_normal(rng, mpcs[i].power);
    a.col(i) = array_kernel(m, std::sin(mpcs[i].aoa) / s) * rho;
    b.col(i) = delay_kernel(n, ofdm.bandwidth(), mpcs[i].delay);
  }
  out.matrix.noalias() = a * b.adjoint();
  return out;
}

/// Selected antennas and subcarriers of one slot. Flat sample order is
/// subcarrier-major: entry (i, j) of the m x n sketch sits at i + m * j and
/// corresponds to flat channel index M * subcarrier_indices[j] + antenna_indices[i].
struct SamplingPattern {
  std::vector<int> antenna_indices;
  std::vector<int> subcarrier_indices;
  long slot = 0;

  int m() const { return static_cast<int>(antenna_indices.size()); }
  int n() const { return static_cast<int>(subcarrier_indices.size()); }
  long size() const { return static_cast<long>(m()) * n(); }

  static SamplingPattern full(int num_antennas, int num_subcarriers) {
    SamplingPattern p;
    p.antenna_indices.resize(num_antennas);
    p.subcarrier_indices.resize(num_subcarriers);
    for (int i = 0; i < num_antennas; ++i) p.antenna_indices[i] = i;
    for (int i = 0; i < num_subcarriers; ++i) p.subcarrier_indices[i] = i;
    return p;
  }

  void validate(int num_antennas, int num_subcarriers) const {
    if (antenna_indices.empty() || subcarrier_indices.empty()) throw shape_error("SamplingPattern: empty pattern");
    auto check = [](const std::vector<int>& idx, int bound, const char* what) {
      std::vector<int> s = idx;
      std::sort(s.begin(), s.end());
      if (s.front() < 0 || s.back() >= bound) throw shape_error(std::string("SamplingPattern: ") + what + " index out of range");
      if (std::adjacent_find(s.begin(), s.end()) != s.end())
        throw shape_error(std::string("SamplingPattern: duplicate ") + what + " index");
    };
    check(antenna_indices, num_antennas, "antenna");
    check(subcarrier_indices, num_subcarriers, "subcarrier");
  }

  /// ℐ_s in sketch order.
  std::vector<long> flat_indices(int num_antennas) const {
    std::vector<long> out;
    out.reserve(size());
    for (int f : subcarrier_indices)
      for (int a : antenna_indices) out.push_back(static_cast<long>(num_antennas) * f + a);
    return out;
  }

  /// 𝕊 vec(H) as an mn-vector.
  CVec select(const CMat& h) const {
    CVec out(size());
    long t = 0;
    for (int f : subcarrier_indices)
      for (int a : antenna_indices) out[t++] = h(a, f);
    return out;
  }

  /// 𝕊^H x reshaped to M x N (zero fill).
  CMat embed(const CVec& x, int num_antennas, int num_subcarriers) const {
    if (x.size() != size()) throw shape_error("SamplingPattern::embed: length mismatch");
    CMat out = CMat::Zero(num_antennas, num_subcarriers);
    long t = 0;
    for (int f : subcarrier_indices)
      for (int a : antenna_indices) out(a, f) = x[t++];
    return out;
  }
};

/// 𝕩 = 𝕊(𝕕 + 𝕫) / σ with 𝕫 ~ CN(0, σ² I); unit noise variance per output entry.
inline CVec sketch(const CMat& channel_sum, const SamplingPattern& pattern, double sigma, Rng& rng) {
  if (!(sigma > 0.0)) throw domain_error("sketch: sigma must be > 0");
  pattern.validate(static_cast<int>(channel_sum.rows()), static_cast<int>(channel_sum.cols()));
  CVec x = pattern.select(channel_sum) / sigma;
  for (long i = 0; i < x.size(); ++i) x[i] += complex_normal(rng);
  return x;
}

enum class PilotMode { uniform, hopping };

/// Probed subcarriers of a user with pilot offset `offset`. Uniform mode probes
/// offset + b D for every coherence block b. Hopping mode shifts each block by a
/// pseudo-random r_b derived from `seed`, shared by every user of that seed, so
/// copilot users keep colliding while the probe moves from slot to slot.
inline std::vector<int> pilot_pattern(const OfdmConfig& ofdm, int offset, PilotMode mode, std::uint64_t seed = 0) {
  const int d = ofdm.coherence_block_subcarriers;
  if (d < 1 || ofdm.num_subcarriers % d != 0)
    throw domain_error("pilot_pattern: coherence_block_subcarriers must divide num_subcarriers");
  if (offset < 0 || offset >= d) throw domain_error("pilot_pattern: offset must lie in [0, coherence_block_subcarriers)");
  const int blocks = ofdm.num_subcarriers / d;
  std::vector<int> out(blocks);
  if (mode == PilotMode::uniform) {
    for (int b = 0; b < blocks; ++b) out[b] = b * d + offset;
  } else {
    Rng rng = make_rng(seed, {0x70696c6fULL});
    for (int b = 0; b < blocks; ++b) {
      const int r = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(d)));
      out[b] = b * d + (offset + r) % d;
    }
  }
  return out;
}

/// Random antenna subset of size m, redrawn per slot.
inline std::vector<int> antenna_subset(int num_antennas, int m, Rng& rng) {
  return sample_without_replacement(rng, num_antennas, m);
}

/// Expected transform-domain energy map E|F^ovs(H)|² of a channel with the given
/// MPCs (Gθ x Gτ, sums to Σ σ_l² M N).
inline RMat expected_transform_energy(const Dictionary& dict, const std::vector<MultipathComponent>& mpcs,
                                      const ArrayConfig& arr, const OfdmConfig& ofdm) {
  const auto& g = dict.grid();
  RMat out = RMat::Zero(g.angle_size(), g.delay_size());
  const double s = std::sin(arr.max_aoa);
  for (const auto& c : mpcs) {
    const CMat h = array_kernel(arr.num_antennas, std::sin(c.aoa) / s) *
                   delay_kernel(ofdm.num_subcarriers, ofdm.bandwidth(), c.delay).adjoint();
    out += c.power * dict.to_transform(h).cwiseAbs2();
  }
  return out;
}

}  // namespace pdc
