#include <catch_amalgamated.hpp>

#include <atomic>
#include <set>
#include <stdexcept>

#include "support.hpp"

using namespace pdc;
using namespace pdc::testing;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

ExperimentConfig small_experiment() {
  ExperimentConfig c;
  c.array.num_antennas = 16;
  c.ofdm.num_subcarriers = 16;
  c.ofdm.coherence_block_subcarriers = 4;
  c.placement.users_per_sector = 2;
  c.solver.max_iterations = 100;
  c.solver.objective_tolerance = 1e-4;
  c.admm.max_iterations = 100;
  c.seed = 11;
  c.window = 10;
  c.trials = 6;
  c.geometries = 2;
  return c;
}

bool same_results(const ExperimentResult& a, const ExperimentResult& b) {
  if (a.geometries.size() != b.geometries.size()) return false;
  for (std::size_t g = 0; g < a.geometries.size(); ++g)
    if (a.geometries[g].contaminated != b.geometries[g].contaminated ||
        a.geometries[g].decontaminated != b.geometries[g].decontaminated)
      return false;
  return a.cdf.rate == b.cdf.rate && a.cdf.contaminated == b.cdf.contaminated &&
         a.cdf.decontaminated == b.cdf.decontaminated;
}

}  // namespace

TEST_CASE("cell layout and copilot topology") {
  CellLayout pr3;
  const auto c3 = pr3.copilot_sectors();
  REQUIRE(c3.size() == 2);
  const BsSite ref = pr3.site({0, 0, 0});
  double last = 0.0;
  for (const auto& s : c3) {
    CHECK(CellLayout::reuse_class(s) == 0);
    CHECK(std::abs(relative_bearing(ref, pr3.sector_centroid(s))) <= kPi / 3.0);
    const double d = (pr3.sector_centroid(s) - ref.position).norm();
    CHECK(d >= last);
    last = d;
  }

  // The three sectors of one cell fall in distinct reuse classes.
  for (int a = -2; a <= 2; ++a)
    for (int b = -2; b <= 2; ++b) {
      std::set<int> classes;
      for (int s = 0; s < 3; ++s) classes.insert(CellLayout::reuse_class({a, b, s}));
      CHECK(classes.size() == 3);
    }

  CellLayout pr1;
  pr1.reuse = PilotReuse::pr1;
  CHECK(pr1.modeled_interferers() == 6);
  const auto c1 = pr1.copilot_sectors();
  CHECK(c1.size() <= 6);
  CHECK(c1.size() > c3.size());
  for (const auto& s : c1) CHECK(std::abs(relative_bearing(ref, pr1.sector_centroid(s))) <= kPi / 3.0);

  pr3.interferer_sectors = 1;
  CHECK(pr3.copilot_sectors().size() == 1);

  // Cell centres sit √3 R apart.
  CHECK_THAT((pr3.cell_center(1, 0) - pr3.cell_center(0, 0)).norm(), WithinRel(std::sqrt(3.0) * 1500.0, 1e-12));
  CHECK_THAT((pr3.cell_center(0, 1) - pr3.cell_center(1, 0)).norm(), WithinRel(std::sqrt(3.0) * 1500.0, 1e-12));
}

TEST_CASE("sector sampling stays in the sector") {
  CellLayout layout;
  Rng rng = make_rng(3);
  const SectorRef s{0, 0, 0};
  const BsSite site = layout.site(s);
  for (int t = 0; t < 500; ++t) {
    const Vec2 p = layout.sample_position(s, rng);
    CHECK(std::abs(relative_bearing(site, p)) <= kPi / 3.0 + 1e-12);
    CHECK((p - site.position).norm() <= layout.cell_radius + 1e-9);
    const Vec2 e = layout.sample_position(s, rng, true);
    CHECK(std::abs(relative_bearing(site, e)) <= kPi / 3.0 + 1e-12);
    // Edge users lie beyond 95% of the way to the rhombus boundary, itself at least R √3 / 2 away.
    CHECK((e - site.position).norm() >= 0.95 * layout.cell_radius * std::sqrt(3.0) / 2.0 - 1e-9);
  }
}

TEST_CASE("pilot budget and assignment") {
  OfdmConfig paper;
  paper.num_subcarriers = 120;
  paper.coherence_block_subcarriers = 10;
  CHECK(pilot_budget(PilotReuse::pr3, 3, paper) == 10);
  CHECK(pilot_budget(PilotReuse::pr1, 3, paper) == 30);

  std::set<std::pair<int, int>> used;
  for (int k = 0; k < 30; ++k) {
    const auto a = assign_pilot(k, paper);
    CHECK(a.offset < 10);
    CHECK(used.insert({a.symbol, a.offset}).second);
  }
  CHECK(assign_pilot(13, paper).symbol == 1);
  CHECK(assign_pilot(13, paper).offset == 3);
}

TEST_CASE("user placement") {
  const auto cfg = small_experiment();
  auto place = [&](std::uint64_t seed) {
    Rng rng = make_rng(seed);
    return place_users(cfg.layout, cfg.placement, cfg.array, cfg.ofdm, cfg.snr_model(), rng);
  };
  const auto a = place(5), b = place(5);
  REQUIRE(a.reference.size() == 2);
  REQUIRE(a.copilot.size() == 2);
  for (std::size_t k = 0; k < a.reference.size(); ++k) {
    CHECK(a.reference[k].geometry.position == b.reference[k].geometry.position);
    CHECK(a.reference[k].pilot.pilot == static_cast<int>(k));
    CHECK(a.reference[k].mpcs.size() == 50u);
    for (const auto& m : a.reference[k].mpcs) {
      CHECK(std::abs(m.aoa) <= cfg.array.max_aoa);
      CHECK(m.delay < cfg.ofdm.max_delay);
    }
  }
  // Copilot user k shares pilot k.
  for (const auto& sector : a.copilot)
    for (std::size_t k = 0; k < sector.size(); ++k) {
      CHECK(sector[k].pilot.symbol == a.reference[k].pilot.symbol);
      CHECK(sector[k].pilot.offset == a.reference[k].pilot.offset);
    }
  // In-sector pilots are orthogonal.
  CHECK((a.reference[0].pilot.symbol != a.reference[1].pilot.symbol ||
         a.reference[0].pilot.offset != a.reference[1].pilot.offset));

  auto over = cfg;
  over.placement.users_per_sector = pilot_budget(over.layout.reuse, over.placement.pilot_symbols, over.ofdm) + 1;
  Rng rng = make_rng(1);
  CHECK_THROWS_AS(place_users(over.layout, over.placement, over.array, over.ofdm, over.snr_model(), rng), domain_error);
}

TEST_CASE("beamformers") {
  Rng rng = make_rng(7);

  SECTION("single user reduces to the matched filter") {
    const CVec h = complex_normal_vector(rng, 6);
    const auto g = mmse_beamformer({h}, 0.5);
    CHECK((g[0] - h / h.norm()).norm() < 1e-12);
  }

  SECTION("two orthogonal users") {
    CVec h1 = CVec::Zero(4), h2 = CVec::Zero(4);
    h1 << 1.0, 1.0, 0.0, 0.0;
    h2 << 1.0, -1.0, 0.5, 0.0;
    REQUIRE(std::abs(h1.dot(h2)) < 1e-15);
    const double sigma = 0.3;
    const auto g = mmse_beamformer({h1, h2}, sigma);
    CHECK(std::abs(g[0].dot(h2)) <= sigma * sigma * h2.norm() + 1e-12);
    CHECK(std::abs(g[0].dot(h2)) < 1e-12);
    CHECK_THAT(g[0].norm(), WithinAbs(1.0, 1e-12));
  }

  SECTION("three users against a dense solve") {
    std::vector<CVec> hs;
    for (int k = 0; k < 3; ++k) hs.push_back(complex_normal_vector(rng, 4));
    const double sigma = 0.8;
    CMat r = CMat::Identity(4, 4) * (sigma * sigma);
    for (const auto& h : hs) r += h * h.adjoint();
    const auto g = mmse_beamformer(hs, sigma);
    for (int k = 0; k < 3; ++k) {
      const CVec v = r.fullPivLu().solve(hs[k]);
      CHECK((g[k] - v / v.norm()).norm() < 1e-10);
    }
    CHECK_THROWS_AS(mmse_beamformer(hs, 0.0), domain_error);
    CHECK(mmse_beamformer({}, 1.0).empty());
  }

  SECTION("conjugate beamformer") {
    CVec e1 = CVec::Zero(3);
    e1[0] = 1.0;
    CHECK((conjugate_beamformer(e1) - e1).norm() == 0.0);
    const CVec h = complex_normal_vector(rng, 5);
    const cplx c(-2.0, 0.7);
    const CVec g = conjugate_beamformer(h), gc = conjugate_beamformer(c * h);
    CHECK((gc - (c / std::abs(c)) * g).norm() < 1e-12);
    CHECK_THAT(g.norm(), WithinAbs(1.0, 1e-12));
    CHECK_THROWS_AS(conjugate_beamformer(CVec::Zero(3)), domain_error);
  }
}

TEST_CASE("sinr and spectral efficiency") {
  Rng rng = make_rng(8);
  const CVec h = complex_normal_vector(rng, 4);
  CHECK_THAT(sinr(h / h.norm(), h, {}, 0.5), WithinRel(h.squaredNorm() / 0.25, 1e-12));

  CVec a = CVec::Zero(2), b = CVec::Zero(2);
  a << 1.0, 0.0;
  b << 0.0, 2.0;
  CHECK(sinr(a, b, {}, 1.0) == 0.0);

  // Hand scene: g = (1, 1)/√2, h = (2, 0), interferer (1, -3), σ² = 0.5.
  CVec g(2), hk(2), hi(2);
  g << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  hk << 2.0, 0.0;
  hi << 1.0, -3.0;
  CHECK_THAT(sinr(g, hk, {hi}, std::sqrt(0.5)), WithinRel(2.0 / (0.5 + 2.0), 1e-12));

  CHECK(spectral_efficiency(RVec::Zero(5)) == 0.0);
  CHECK_THAT(spectral_efficiency(RVec::Ones(7)), WithinAbs(1.0, 1e-15));
  CHECK_THAT(spectral_efficiency((RVec(2) << 1.0, 3.0).finished()), WithinAbs(1.5, 1e-15));
  CHECK_THAT(spectral_efficiency(RVec::Constant(3, 2.5)), WithinAbs(std::log2(3.5), 1e-15));
  CHECK_THROWS_AS(spectral_efficiency((RVec(1) << -0.1).finished()), domain_error);
}

TEST_CASE("sector rates") {
  Rng rng = make_rng(9);
  std::vector<CMat> truth, est;
  for (int k = 0; k < 3; ++k) {
    truth.push_back(complex_normal_matrix(rng, 6, 4));
    est.push_back(truth.back() + 0.1 * complex_normal_matrix(rng, 6, 4));
  }
  const CMat other = complex_normal_matrix(rng, 6, 4);
  for (auto kind : {BeamformerKind::mmse, BeamformerKind::conjugate}) {
    const auto r = sector_rates(est, truth, {&other}, kind, 1.0);
    REQUIRE(r.size() == 3);
    for (double v : r) CHECK(v >= 0.0);
  }
  // Perfect knowledge with MMSE beats conjugate beamforming in sum rate here.
  double mmse = 0.0, conj = 0.0;
  for (double v : sector_rates(truth, truth, {}, BeamformerKind::mmse, 1.0)) mmse += v;
  for (double v : sector_rates(truth, truth, {}, BeamformerKind::conjugate, 1.0)) conj += v;
  CHECK(mmse > conj);
  CHECK_THROWS_AS(sector_rates({truth[0]}, truth, {}, BeamformerKind::mmse, 1.0), shape_error);
}

TEST_CASE("genie oracle") {
  Rng rng = make_rng(10);
  const CMat truth = complex_normal_matrix(rng, 8, 4, 4.0);
  const auto good = genie_oracle(truth, truth, {}, 1.0, 1.0);
  CHECK(good.success);
  CHECK(good.achieved_rate > 1.0);
  const auto bad = genie_oracle(truth, truth, {}, 1.0, 1e3);
  CHECK_FALSE(bad.success);
  CHECK(bad.achieved_rate == good.achieved_rate);
  CHECK(genie_oracle(CMat::Zero(8, 4), truth, {}, 1.0, 0.5).achieved_rate == 0.0);
}

TEST_CASE("averaged empirical cdf") {
  const auto t = average_cdf({{1.0, 3.0}, {2.0}}, {{2.0, 4.0}});
  REQUIRE(t.rate == std::vector<double>({1.0, 2.0, 3.0, 4.0}));
  // Contaminated: mean of {F1, F2}; F1 steps at 1, 3 and F2 at 2.
  const std::vector<double> cont{0.25, 0.75, 1.0, 1.0};
  const std::vector<double> dec{0.0, 0.5, 0.5, 1.0};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK_THAT(t.contaminated[i], WithinAbs(cont[i], 1e-15));
    CHECK_THAT(t.decontaminated[i], WithinAbs(dec[i], 1e-15));
  }

  Rng rng = make_rng(11);
  std::vector<std::vector<double>> a(3), b(3);
  for (int g = 0; g < 3; ++g)
    for (int i = 0; i < 20; ++i) {
      a[g].push_back(uniform01(rng));
      b[g].push_back(2.0 * uniform01(rng));
    }
  const auto r = average_cdf(a, b);
  for (std::size_t i = 1; i < r.rate.size(); ++i) {
    CHECK(r.rate[i] > r.rate[i - 1]);
    CHECK(r.contaminated[i] >= r.contaminated[i - 1]);
    CHECK(r.decontaminated[i] >= r.decontaminated[i - 1]);
  }
  CHECK(r.contaminated.back() == 1.0);
  CHECK(r.decontaminated.back() == 1.0);

  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK(median({}) == 0.0);
}

TEST_CASE("parallel_for") {
  std::vector<long> out(1000, -1);
  parallel_for(1000, 4, [&](long i) { out[static_cast<std::size_t>(i)] = i * i; });
  for (long i = 0; i < 1000; ++i) CHECK(out[static_cast<std::size_t>(i)] == i * i);

  std::atomic<int> calls{0};
  parallel_for(0, 4, [&](long) { ++calls; });
  CHECK(calls == 0);

  CHECK_THROWS_AS(parallel_for(50, 3,
                               [](long i) {
                                 if (i == 17) throw std::runtime_error("boom");
                               }),
                  std::runtime_error);
}

TEST_CASE("small experiment end to end") {
  auto cfg = small_experiment();
  const auto res = run_experiment(cfg);
  REQUIRE(res.geometries.size() == 2);
  CHECK(res.failed_trials() == 0);
  for (const auto& g : res.geometries) {
    CHECK(g.contaminated.size() == 6u);
    CHECK(g.decontaminated.size() == 6u);
    for (double v : g.contaminated) CHECK(v >= 0.0);
    for (double v : g.decontaminated) CHECK(v >= 0.0);
  }
  REQUIRE_FALSE(res.cdf.rate.empty());
  CHECK(res.cdf.contaminated.back() == 1.0);
  CHECK(res.cdf.decontaminated.back() == 1.0);
  for (std::size_t i = 1; i < res.cdf.rate.size(); ++i) {
    CHECK(res.cdf.contaminated[i] >= res.cdf.contaminated[i - 1]);
    CHECK(res.cdf.decontaminated[i] >= res.cdf.decontaminated[i - 1]);
  }

  SECTION("repeatable and independent of the worker count") {
    auto threaded = cfg;
    threaded.threads = 3;
    CHECK(same_results(res, run_experiment(cfg)));
    CHECK(same_results(res, run_experiment(threaded)));
  }

  SECTION("invalid configuration") {
    auto bad = cfg;
    bad.trials = 0;
    CHECK_THROWS_AS(run_experiment(bad), domain_error);
    bad = cfg;
    bad.antenna_ratio = 1.5;
    CHECK_THROWS_AS(run_experiment(bad), domain_error);
  }
}

TEST_CASE("without copilots both pipelines serve the sector alike") {
  auto cfg = small_experiment();
  cfg.copilot_scale = 0.0;
  cfg.trials = 10;
  cfg.geometries = 3;
  const auto res = run_experiment(cfg);
  const double mc = median(res.pooled(false));
  const double md = median(res.pooled(true));
  CHECK_THAT(md, WithinRel(mc, 0.15));
}
