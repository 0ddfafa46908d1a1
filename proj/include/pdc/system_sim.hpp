// Multi-cell Monte Carlo harness: hexagonal layout, pilot reuse, user drops,
// beamforming, SINR and sum-rate CDFs.
#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "pdc/channel_sim.hpp"
#include "pdc/clustering.hpp"
#include "pdc/core_model.hpp"
#include "pdc/decontam.hpp"
#include "pdc/sparse_psf.hpp"

namespace pdc {

enum class PilotReuse { pr1, pr3 };

/// A sector of the hexagonal lattice. Cell (a, b) is centred at a v1 + b v2
/// with v1 = √3 R ∠30°, v2 = √3 R ∠90°; sector s points at azimuth 120° s.
struct SectorRef {
  int a = 0;
  int b = 0;
  int sector = 0;

  bool operator==(const SectorRef&) const = default;
};

struct CellLayout {
  double cell_radius = 1500.0;  ///< centre-to-vertex distance [m]
  PilotReuse reuse = PilotReuse::pr3;
  int interferer_sectors = -1;  ///< modeled copilot sectors; -1 selects 2 (PR3) or 6 (PR1)

  int modeled_interferers() const {
    if (interferer_sectors >= 0) return interferer_sectors;
    return reuse == PilotReuse::pr3 ? 2 : 6;
  }

  Vec2 cell_center(int a, int b) const {
    const double d = std::sqrt(3.0) * cell_radius;
    return a * d * Vec2(std::cos(kPi / 6.0), std::sin(kPi / 6.0)) + b * d * Vec2(0.0, 1.0);
  }

  static double boresight(int sector) { return 2.0 * kPi * sector / 3.0; }

  BsSite site(const SectorRef& s) const { return {cell_center(s.a, s.b), boresight(s.sector)}; }

  /// PR3 reuse class; equal classes share pilots.
  static int reuse_class(const SectorRef& s) { return (((s.sector + s.a + 2 * s.b) % 3) + 3) % 3; }

  /// Centroid of the sector rhombus.
  Vec2 sector_centroid(const SectorRef& s) const {
    const double az = boresight(s.sector);
    return cell_center(s.a, s.b) + 0.5 * cell_radius * Vec2(std::cos(az), std::sin(az));
  }

  /// Copilot sectors of the reference sector (0, 0, 0): first-tier sectors that
  /// share its pilots and whose centroid lies in its angular span, nearest first.
  std::vector<SectorRef> copilot_sectors(double max_aoa = kPi / 3.0) const {
    static constexpr int tier[6][2] = {{1, 0}, {0, 1}, {-1, 1}, {-1, 0}, {0, -1}, {1, -1}};
    const BsSite ref = site({0, 0, 0});
    std::vector<std::pair<double, SectorRef>> cand;
    for (const auto& n : tier)
      for (int s = 0; s < 3; ++s) {
        const SectorRef r{n[0], n[1], s};
        if (reuse == PilotReuse::pr3 && reuse_class(r) != 0) continue;
        const Vec2 c = sector_centroid(r);
        if (std::abs(relative_bearing(ref, c)) > max_aoa) continue;
        cand.emplace_back((c - ref.position).norm(), r);
      }
    std::stable_sort(cand.begin(), cand.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    std::vector<SectorRef> out;
    for (const auto& [d, r] : cand)
      if (static_cast<int>(out.size()) < modeled_interferers()) out.push_back(r);
    return out;
  }

  /// Uniform point in the sector rhombus (standard) or close to its outer
  /// boundary, at a fraction in [edge_inner, 1] of the boundary distance (edge).
  Vec2 sample_position(const SectorRef& s, Rng& rng, bool edge = false, double edge_inner = 0.95) const {
    const Vec2 c = cell_center(s.a, s.b);
    const double az = boresight(s.sector);
    auto vertex = [&](double ang) -> Vec2 { return c + cell_radius * Vec2(std::cos(ang), std::sin(ang)); };
    const Vec2 lo = vertex(az - kPi / 3.0), mid = vertex(az), hi = vertex(az + kPi / 3.0);
    const bool upper = uniform01(rng) < 0.5;
    const Vec2 e0 = upper ? mid : lo;
    const Vec2 e1 = upper ? hi : mid;
    if (edge) {
      const Vec2 boundary = e0 + uniform01(rng) * (e1 - e0);
      const double f = edge_inner + (1.0 - edge_inner) * uniform01(rng);
      return c + f * (boundary - c);
    }
    double u = uniform01(rng), v = uniform01(rng);
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    return c + u * (e0 - c) + v * (e1 - c);
  }
};

/// Pilot p occupies OFDM symbol p / D and subcarrier offset p mod D.
struct PilotAssignment {
  int pilot = 0;
  int symbol = 0;
  int offset = 0;
};

inline PilotAssignment assign_pilot(int pilot, const OfdmConfig& ofdm) {
  const int d = ofdm.coherence_block_subcarriers;
  return {pilot, pilot / d, pilot % d};
}

/// Users a sector can serve with orthogonal pilots.
inline int pilot_budget(PilotReuse reuse, int pilot_symbols, const OfdmConfig& ofdm) {
  const int dims = pilot_symbols * ofdm.coherence_block_subcarriers;
  return reuse == PilotReuse::pr3 ? dims / 3 : dims;
}

struct PlacedUser {
  UserGeometry geometry;
  SectorRef sector;
  PilotAssignment pilot;
  double ring_phase = 0.0;
  std::vector<MultipathComponent> mpcs;  ///< paths seen by the reference BS sector
};

/// Users of the reference sector plus those of each modeled copilot sector;
/// user k of every sector carries pilot k.
struct UserPopulation {
  std::vector<PlacedUser> reference;
  std::vector<std::vector<PlacedUser>> copilot;  ///< [copilot sector][k]
};

struct PlacementConfig {
  int users_per_sector = 4;
  int pilot_symbols = 3;
  double ring_radius = 150.0;
  int num_mpcs = 50;
  double min_distance = 50.0;
  bool edge_users = false;
  int max_attempts = 10000;
};

/// Drops users, computes their paths at the reference sector, and redraws
/// reference users whose paths leave the sector span or the delay range.
/// Copilot paths outside the span or the delay range are discarded.
inline UserPopulation place_users(const CellLayout& layout, const PlacementConfig& pc, const ArrayConfig& arr,
                                  const OfdmConfig& ofdm, const SnrModel& snr, Rng& rng) {
  const int budget = pilot_budget(layout.reuse, pc.pilot_symbols, ofdm);
  if (pc.users_per_sector < 1) throw domain_error("place_users: users_per_sector must be >= 1");
  if (pc.users_per_sector > budget) throw domain_error("place_users: users_per_sector exceeds the pilot budget");
  const SectorRef ref{0, 0, 0};
  const BsSite ref_site = layout.site(ref);
  auto draw = [&](const SectorRef& s, int k, OutOfRange policy) {
    for (int attempt = 0; attempt < pc.max_attempts; ++attempt) {
      PlacedUser u;
      u.sector = s;
      u.pilot = assign_pilot(k, ofdm);
      u.geometry.position = layout.sample_position(s, rng, pc.edge_users && s == ref);
      u.geometry.ring_radius = pc.ring_radius;
      u.geometry.num_mpcs = pc.num_mpcs;
      u.ring_phase = 2.0 * kPi * uniform01(rng);
      if (u.geometry.distance_to(layout.cell_center(s.a, s.b)) < pc.min_distance) continue;
      try {
        u.mpcs = one_ring_mpcs(u.geometry, ref_site, snr, arr, ofdm, u.ring_phase, policy);
      } catch (const geometry_error&) {
        continue;
      }
      return u;
    }
    throw geometry_error("place_users: no valid placement found");
  };
  UserPopulation pop;
  for (int k = 0; k < pc.users_per_sector; ++k) pop.reference.push_back(draw(ref, k, OutOfRange::error));
  for (const auto& s : layout.copilot_sectors(arr.max_aoa)) {
    std::vector<PlacedUser> users;
    for (int k = 0; k < pc.users_per_sector; ++k) users.push_back(draw(s, k, OutOfRange::drop));
    pop.copilot.push_back(std::move(users));
  }
  return pop;
}

/// g_k = v_k / ‖v_k‖ with v_k = (σ² I + Σ_k' ĥ_k' ĥ_k'^H)^{-1} ĥ_k.
inline std::vector<CVec> mmse_beamformer(const std::vector<CVec>& estimates, double sigma) {
  if (!(sigma > 0.0)) throw domain_error("mmse_beamformer: sigma must be > 0");
  if (estimates.empty()) return {};
  const long m = estimates.front().size();
  CMat h(m, static_cast<long>(estimates.size()));
  for (std::size_t k = 0; k < estimates.size(); ++k) {
    if (estimates[k].size() != m) throw shape_error("mmse_beamformer: length mismatch");
    h.col(static_cast<long>(k)) = estimates[k];
  }
  CMat r = h * h.adjoint();
  r.diagonal().array() += sigma * sigma;
  const CMat v = r.llt().solve(h);
  std::vector<CVec> out(estimates.size());
  for (std::size_t k = 0; k < estimates.size(); ++k) {
    const double n = v.col(static_cast<long>(k)).norm();
    out[k] = n > 0.0 ? CVec(v.col(static_cast<long>(k)) / n) : CVec(CVec::Zero(m));
  }
  return out;
}

inline CVec conjugate_beamformer(const CVec& estimate) {
  const double n = estimate.norm();
  if (!(n > 0.0)) throw domain_error("conjugate_beamformer: zero channel estimate");
  return estimate / n;
}

/// |g^H h|² / (σ² + Σ |g^H h_i|²).
inline double sinr(const CVec& g, const CVec& h, const std::vector<CVec>& interferers, double sigma) {
  double den = sigma * sigma;
  for (const auto& i : interferers) den += std::norm(g.dot(i));
  return std::norm(g.dot(h)) / den;
}

/// (1/N) Σ_ω log2(1 + sinr[ω]).
inline double spectral_efficiency(const RVec& sinr_per_subcarrier) {
  if (sinr_per_subcarrier.size() == 0) return 0.0;
  double s = 0.0;
  for (long i = 0; i < sinr_per_subcarrier.size(); ++i) {
    if (sinr_per_subcarrier[i] < 0.0) throw domain_error("spectral_efficiency: negative SINR");
    s += std::log2(1.0 + sinr_per_subcarrier[i]);
  }
  return s / static_cast<double>(sinr_per_subcarrier.size());
}

enum class BeamformerKind { mmse, conjugate };

/// Per-user rates of the reference sector. `estimates[k]` drives the
/// beamformers, `truth[k]` and `others` (out-of-sector users) set the SINR.
inline std::vector<double> sector_rates(const std::vector<CMat>& estimates, const std::vector<CMat>& truth,
                                        const std::vector<const CMat*>& others, BeamformerKind kind, double sigma) {
  const std::size_t k_users = truth.size();
  if (estimates.size() != k_users) throw shape_error("sector_rates: estimate/truth count mismatch");
  if (k_users == 0) return {};
  const long n = truth.front().cols();
  std::vector<RVec> per(k_users, RVec(n));
  std::vector<CVec> cols(k_users);
  std::vector<CVec> interf;
  for (long w = 0; w < n; ++w) {
    for (std::size_t k = 0; k < k_users; ++k) cols[k] = estimates[k].col(w);
    std::vector<CVec> g;
    if (kind == BeamformerKind::mmse) {
      g = mmse_beamformer(cols, sigma);
    } else {
      g.resize(k_users);
      for (std::size_t k = 0; k < k_users; ++k) {
        const double norm = cols[k].norm();
        g[k] = norm > 0.0 ? CVec(cols[k] / norm) : CVec(CVec::Zero(cols[k].size()));
      }
    }
    for (std::size_t k = 0; k < k_users; ++k) {
      interf.clear();
      for (std::size_t j = 0; j < k_users; ++j)
        if (j != k) interf.push_back(truth[j].col(w));
      for (const CMat* o : others) interf.push_back(o->col(w));
      per[k][w] = sinr(g[k], truth[k].col(w), interf, sigma);
    }
  }
  std::vector<double> out(k_users);
  for (std::size_t k = 0; k < k_users; ++k) out[k] = spectral_efficiency(per[k]);
  return out;
}

/// Genie decoder: success iff the rate achieved with a conjugate beamformer
/// built from `estimate` exceeds `target`.
inline OracleVerdict genie_oracle(const CMat& estimate, const CMat& truth, const std::vector<const CMat*>& interferers,
                                  double sigma, double target) {
  RVec s(truth.cols());
  std::vector<CVec> interf;
  for (long w = 0; w < truth.cols(); ++w) {
    const CVec e = estimate.col(w);
    const double norm = e.norm();
    if (!(norm > 0.0)) {
      s[w] = 0.0;
      continue;
    }
    interf.clear();
    for (const CMat* i : interferers) interf.push_back(i->col(w));
    s[w] = sinr(e / norm, truth.col(w), interf, sigma);
  }
  const double rate = spectral_efficiency(s);
  return {rate > target, rate};
}

/// Runs fn(i) for i in [0, count) on `threads` workers. The first exception is rethrown.
template <class Fn>
void parallel_for(long count, int threads, Fn&& fn) {
  threads = std::max(1, threads);
  if (threads == 1 || count <= 1) {
    for (long i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<long> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  const int workers = static_cast<int>(std::min<long>(threads, count));
  for (int t = 0; t < workers; ++t)
    pool.emplace_back([&] {
      for (long i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          next = count;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

enum class ClusteringMode { delay, supervised };

struct ExperimentConfig {
  ArrayConfig array;
  OfdmConfig ofdm;
  int angle_oversampling = 2;
  int delay_oversampling = 2;

  CellLayout layout;
  PlacementConfig placement;
  double snr_min_db = 5.0;
  double r0 = 500.0;
  double eta = 3.2;
  double reference_eta = 3.2;    ///< exponent the cell-edge SNR calibration refers to
  double snr_anchor = 50.0;      ///< distance where SNR is matched across exponents [m]

  SolverConfig solver;
  AdmmConfig admm;

  std::uint64_t seed = 1;
  int window = 50;
  int trials = 200;
  int geometries = 10;
  double antenna_ratio = 0.25;
  std::optional<double> tau0;  ///< delay threshold; R_cell / c0 when unset
  ClusteringMode clustering = ClusteringMode::delay;
  int cluster_count = -1;      ///< -1 selects 1 + modeled copilot sectors
  double oracle_target = 1.0;  ///< bits/s/Hz
  BeamformerKind beamformer = BeamformerKind::mmse;
  int baseline_delay_taps = 0;  ///< 0 selects min(⌈Δτ_max W⌉, n)
  double copilot_scale = 1.0;   ///< amplitude factor on copilot channels (0 removes them)
  int threads = 1;

  SnrModel snr_model() const {
    const SnrModel ref = SnrModel::calibrated(layout.cell_radius, db_to_linear(snr_min_db), reference_eta, r0);
    return eta == reference_eta ? ref : SnrModel::matched(ref, eta, snr_anchor);
  }
  double delay_threshold() const { return tau0.value_or(layout.cell_radius / kSpeedOfLight); }
  int clusters() const { return cluster_count > 0 ? cluster_count : 1 + layout.modeled_interferers(); }
  int sampled_antennas() const {
    return std::clamp(static_cast<int>(std::lround(antenna_ratio * array.num_antennas)), 1, array.num_antennas);
  }

  void validate() const {
    array.validate();
    ofdm.validate();
    solver.validate();
    admm.validate();
    if (window < 1 || trials < 1 || geometries < 1) throw domain_error("experiment: window, trials, geometries must be >= 1");
    if (!(antenna_ratio > 0.0 && antenna_ratio <= 1.0)) throw domain_error("experiment: antenna_ratio must lie in (0, 1]");
    if (!(layout.cell_radius > 0.0)) throw domain_error("cells: cell_radius must be > 0");
    if (threads < 1) throw domain_error("experiment: threads must be >= 1");
  }
};

/// Sum rates of one geometry, one entry per successful trial.
struct GeometryResult {
  std::vector<double> contaminated;
  std::vector<double> decontaminated;
  int failed_trials = 0;
  int rejected_users = 0;  ///< supervised clustering found no accepted hypothesis
};

struct CdfTable {
  std::vector<double> rate;
  std::vector<double> contaminated;
  std::vector<double> decontaminated;
};

struct ExperimentResult {
  std::vector<GeometryResult> geometries;
  CdfTable cdf;

  std::vector<double> pooled(bool decontaminated) const {
    std::vector<double> out;
    for (const auto& g : geometries) {
      const auto& v = decontaminated ? g.decontaminated : g.contaminated;
      out.insert(out.end(), v.begin(), v.end());
    }
    return out;
  }
  int failed_trials() const {
    int n = 0;
    for (const auto& g : geometries) n += g.failed_trials;
    return n;
  }
};

/// Empirical CDF averaged over groups, evaluated at every pooled sample value.
inline CdfTable average_cdf(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
  std::vector<double> points;
  for (const auto* set : {&a, &b})
    for (const auto& g : *set) points.insert(points.end(), g.begin(), g.end());
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());
  auto eval = [&](const std::vector<std::vector<double>>& groups) {
    std::vector<double> out(points.size(), 0.0);
    int used = 0;
    for (auto g : groups) {
      if (g.empty()) continue;
      ++used;
      std::sort(g.begin(), g.end());
      for (std::size_t p = 0; p < points.size(); ++p) {
        const auto cnt = std::upper_bound(g.begin(), g.end(), points[p]) - g.begin();
        out[p] += static_cast<double>(cnt) / static_cast<double>(g.size());
      }
    }
    for (double& v : out) v = used > 0 ? v / used : 0.0;
    return out;
  };
  return {points, eval(a), eval(b)};
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

namespace detail {

// Stream tags keep the random streams of the pipeline stages apart.
enum Stream : std::uint64_t { placement = 1, learn_pattern = 2, learn_channel = 3, learn_noise = 4,
                              trial_channel = 5, trial_noise = 6, probe = 7 };

struct UserModel {
  std::vector<MultipathComponent> mpcs;
  std::uint64_t id = 0;
};

struct GeometrySetup {
  UserPopulation population;
  std::vector<UserModel> reference;              // [k]
  std::vector<std::vector<UserModel>> copilots;  // [k][sector]
  std::vector<UserModel> all_copilot_users;      // every modeled copilot user
};

inline GeometrySetup setup_geometry(const ExperimentConfig& cfg, long g) {
  Rng rng = make_rng(cfg.seed, {placement, static_cast<std::uint64_t>(g)});
  GeometrySetup s;
  s.population = place_users(cfg.layout, cfg.placement, cfg.array, cfg.ofdm, cfg.snr_model(), rng);
  const auto k_users = s.population.reference.size();
  s.copilots.resize(k_users);
  std::uint64_t id = 0;
  for (const auto& u : s.population.reference) s.reference.push_back({u.mpcs, id++});
  for (const auto& sector : s.population.copilot)
    for (std::size_t k = 0; k < sector.size(); ++k) {
      std::vector<MultipathComponent> m = sector[k].mpcs;
      for (auto& c : m) c.power *= cfg.copilot_scale * cfg.copilot_scale;
      UserModel um{std::move(m), id++};
      s.copilots[k].push_back(um);
      s.all_copilot_users.push_back(um);
    }
  return s;
}

inline CMat realize(const ExperimentConfig& cfg, const UserModel& u, std::uint64_t tag, long g, long t) {
  Rng rng = make_rng(cfg.seed, {tag, static_cast<std::uint64_t>(g), static_cast<std::uint64_t>(t), u.id});
  return realize_channel(u.mpcs, cfg.array, cfg.ofdm, rng, t).matrix;
}

}  // namespace detail

/// Masks of one reference user learned from a window of hopping-pilot sketches.
inline MaskPair learn_masks(const ExperimentConfig& cfg, const Dictionary& dict, const detail::GeometrySetup& setup,
                            long g, std::size_t k, bool* rejected = nullptr) {
  using namespace detail;
  const auto& user = setup.population.reference[k];
  SketchWindow win;
  const int m = cfg.sampled_antennas();
  const int n = cfg.ofdm.num_subcarriers / cfg.ofdm.coherence_block_subcarriers;
  win.data.resize(static_cast<long>(m) * n, cfg.window);
  for (int c = 0; c < cfg.window; ++c) {
    Rng prng = make_rng(cfg.seed, {learn_pattern, static_cast<std::uint64_t>(g), static_cast<std::uint64_t>(c)});
    SamplingPattern p;
    p.slot = c;
    p.antenna_indices = antenna_subset(cfg.array.num_antennas, m, prng);
    p.subcarrier_indices = pilot_pattern(cfg.ofdm, user.pilot.offset, PilotMode::hopping, prng());
    CMat d = realize(cfg, setup.reference[k], learn_channel, g, c);
    for (const auto& cu : setup.copilots[k]) d += realize(cfg, cu, learn_channel, g, c);
    Rng nrng = make_rng(cfg.seed, {learn_noise, static_cast<std::uint64_t>(g), static_cast<std::uint64_t>(c), k});
    win.data.col(c) = sketch(d, p, 1.0, nrng);
    win.patterns.push_back(std::move(p));
  }
  const PsfSolution sol = solve_psf(win, dict, cfg.solver);
  const auto& grid = dict.grid();
  if (cfg.clustering == ClusteringMode::delay) return cluster_by_delay(sol.psf, grid, cfg.delay_threshold());

  const Mask mask = build_mask(sol.psf, default_threshold(sol.psf));
  const ClusterHypothesis hyp = partition_rectangles(sol.psf, mask, cfg.clusters());
  // Probe slot: uniform pilots, full antennas, as in a regular training slot.
  const SamplingPattern probe{SamplingPattern::full(cfg.array.num_antennas, 1).antenna_indices,
                              pilot_pattern(cfg.ofdm, user.pilot.offset, PilotMode::uniform), 0};
  const CMat truth = realize(cfg, setup.reference[k], detail::probe, g, 0);
  std::vector<CMat> cop;
  for (const auto& cu : setup.copilots[k]) cop.push_back(realize(cfg, cu, detail::probe, g, 0));
  CMat d = truth;
  for (const auto& c : cop) d += c;
  Rng nrng = make_rng(cfg.seed, {detail::probe, static_cast<std::uint64_t>(g), k, 1});
  const CMat x = sketch_matrix(sketch(d, probe, 1.0, nrng), probe);
  std::vector<const CMat*> interferers;
  for (const auto& c : cop) interferers.push_back(&c);
  const Selection sel = supervised_select(hyp, [&](const MaskPair& masks) {
    const AdmmResult est = admm_interpolate(x, probe, masks, dict, cfg.admm);
    return genie_oracle(est.p, truth, interferers, 1.0, cfg.oracle_target);
  });
  if (sel.accepted) return sel.masks;
  if (rejected) *rejected = true;
  return cluster_by_delay(sol.psf, grid, cfg.delay_threshold());
}

/// Full pipeline for one user drop: learn masks, then per trial estimate every
/// reference user (ADMM vs contaminated DFT interpolation), beamform, and sum rates.
inline GeometryResult run_geometry(const ExperimentConfig& cfg, const Dictionary& dict, long g, int threads = 1) {
  using namespace detail;
  const GeometrySetup setup = setup_geometry(cfg, g);
  const std::size_t k_users = setup.reference.size();
  GeometryResult out;

  std::vector<MaskPair> masks(k_users);
  std::vector<char> rejected(k_users, 0);
  parallel_for(static_cast<long>(k_users), threads, [&](long k) {
    bool rej = false;
    masks[k] = learn_masks(cfg, dict, setup, g, static_cast<std::size_t>(k), &rej);
    rejected[k] = rej;
  });
  for (char r : rejected) out.rejected_users += r;

  std::vector<SamplingPattern> patterns(k_users);
  for (std::size_t k = 0; k < k_users; ++k)
    patterns[k] = {SamplingPattern::full(cfg.array.num_antennas, 1).antenna_indices,
                   pilot_pattern(cfg.ofdm, setup.population.reference[k].pilot.offset, PilotMode::uniform), 0};
  const int n_probe = static_cast<int>(patterns.front().subcarrier_indices.size());
  const int taps = cfg.baseline_delay_taps > 0 ? cfg.baseline_delay_taps : std::min(cfg.ofdm.delay_taps(), n_probe);

  struct TrialOut {
    double contaminated = 0.0, decontaminated = 0.0;
    bool ok = false;
  };
  std::vector<TrialOut> trials(static_cast<std::size_t>(cfg.trials));
  parallel_for(cfg.trials, threads, [&](long t) {
    try {
      std::vector<CMat> truth(k_users);
      for (std::size_t k = 0; k < k_users; ++k) truth[k] = realize(cfg, setup.reference[k], trial_channel, g, t);
      std::vector<CMat> others(setup.all_copilot_users.size());
      for (std::size_t i = 0; i < others.size(); ++i)
        others[i] = realize(cfg, setup.all_copilot_users[i], trial_channel, g, t);
      std::vector<const CMat*> other_ptrs;
      for (const auto& o : others) other_ptrs.push_back(&o);

      std::vector<CMat> decont(k_users), cont(k_users);
      for (std::size_t k = 0; k < k_users; ++k) {
        CMat d = truth[k];
        // Copilot users of pilot k are stored sector by sector in all_copilot_users.
        for (std::size_t s = 0; s < setup.copilots[k].size(); ++s)
          d += others[s * k_users + k];
        Rng nrng = make_rng(cfg.seed, {trial_noise, static_cast<std::uint64_t>(g), static_cast<std::uint64_t>(t), k});
        const CMat x = sketch_matrix(sketch(d, patterns[k], 1.0, nrng), patterns[k]);
        decont[k] = admm_interpolate(x, patterns[k], masks[k], dict, cfg.admm).p;
        cont[k] = interpolate_unprobed_columns(x, patterns[k].subcarrier_indices, cfg.ofdm, InterpMethod::dft, taps);
      }
      double rc = 0.0, rd = 0.0;
      for (double r : sector_rates(cont, truth, other_ptrs, cfg.beamformer, 1.0)) rc += r;
      for (double r : sector_rates(decont, truth, other_ptrs, cfg.beamformer, 1.0)) rd += r;
      trials[static_cast<std::size_t>(t)] = {rc, rd, true};
    } catch (const numerical_failure&) {
      trials[static_cast<std::size_t>(t)].ok = false;
    }
  });
  for (const auto& tr : trials) {
    if (!tr.ok) {
      ++out.failed_trials;
      continue;
    }
    out.contaminated.push_back(tr.contaminated);
    out.decontaminated.push_back(tr.decontaminated);
  }
  return out;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const Dictionary dict(AngleDelayGrid(cfg.array, cfg.ofdm, cfg.angle_oversampling, cfg.delay_oversampling));
  ExperimentResult res;
  res.geometries.resize(static_cast<std::size_t>(cfg.geometries));
  for (long g = 0; g < cfg.geometries; ++g) res.geometries[static_cast<std::size_t>(g)] = run_geometry(cfg, dict, g, cfg.threads);
  std::vector<std::vector<double>> a, b;
  for (const auto& g : res.geometries) {
    a.push_back(g.contaminated);
    b.push_back(g.decontaminated);
  }
  res.cdf = average_cdf(a, b);
  return res;
}

}  // namespace pdc
