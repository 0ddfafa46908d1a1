#include <catch_amalgamated.hpp>

#include <algorithm>
#include <sstream>

#include "support.hpp"

using namespace pdc;
using namespace pdc::testing;

namespace {

Psf empty_psf(int ga, int gd) { return Psf{ga, gd, RVec::Zero(static_cast<long>(ga) * gd)}; }

void set(Psf& p, int i, int j, double v) { p.weights[i + static_cast<long>(p.angle_size) * j] = v; }

/// 2 x 2 square blob with top-left corner (i, j).
void blob(Psf& p, int i, int j, double v) {
  for (int dj = 0; dj < 2; ++dj)
    for (int di = 0; di < 2; ++di) set(p, i + di, j + dj, v);
}

void check_partition(const MaskPair& pair, const Mask& mask) {
  CHECK(pair.disjoint());
  CHECK((pair.combined() == mask).all());
}

}  // namespace

TEST_CASE("build_mask thresholds") {
  Psf p = empty_psf(3, 1);
  p.weights << 0.5, 0.2, 0.05;
  const Mask m = build_mask(p, 0.1);
  CHECK(m(0, 0));
  CHECK(m(1, 0));
  CHECK_FALSE(m(2, 0));

  CHECK_FALSE(build_mask(p, 0.51).any());
  CHECK(build_mask(p, 0.5).count() == 1);

  Psf sparse = empty_psf(4, 2);
  set(sparse, 1, 1, 0.3);
  set(sparse, 3, 0, 1e-9);
  const Mask support = build_mask(sparse, 0.0);
  CHECK(support.count() == 2);
  CHECK(support(1, 1));
  CHECK(support(3, 0));

  CHECK_THROWS_AS(build_mask(p, -1.0), domain_error);
}

TEST_CASE("default threshold") {
  Psf p = empty_psf(10, 1);
  p.weights << 1.0, 0.01, 0.01, 0.01, 0.01, 0, 0, 0, 0, 0;
  // max(0.02, 3 x median {0.01 x4, 1}) = 0.03.
  CHECK_THAT(default_threshold(p), Catch::Matchers::WithinAbs(0.03, 1e-15));
  CHECK(default_threshold(empty_psf(3, 3)) == 0.0);
}

TEST_CASE("cluster_by_delay") {
  const AngleDelayGrid g(array_of(8), ofdm_of(8));  // delay step 1 / W
  const double step = g.delay_period() / g.delay_size();

  SECTION("all mass below the threshold leaves interference empty") {
    Psf p = empty_psf(g.angle_size(), g.delay_size());
    blob(p, 3, 0, 1.0);
    const auto pair = cluster_by_delay(p, g, 4.0 * step, 0.1);
    CHECK(pair.signal.count() == 4);
    CHECK_FALSE(pair.interference.any());
  }

  SECTION("blobs straddling the threshold land wholly in one mask each") {
    Psf p = empty_psf(g.angle_size(), g.delay_size());
    blob(p, 2, 1, 1.0);   // delays 1, 2
    blob(p, 9, 6, 0.7);   // delays 6, 7
    set(p, 12, 12, 0.01); // below ι
    const double tau0 = 4.5 * step;
    const auto pair = cluster_by_delay(p, g, tau0, 0.1);
    const Mask mask = build_mask(p, 0.1);
    check_partition(pair, mask);
    for (int j = 1; j <= 2; ++j)
      for (int i = 2; i <= 3; ++i) CHECK(pair.signal(i, j));
    for (int j = 6; j <= 7; ++j)
      for (int i = 9; i <= 10; ++i) CHECK(pair.interference(i, j));
    CHECK_FALSE(pair.signal(12, 12));
    CHECK_FALSE(pair.interference(12, 12));

    // Masked weights sum back to γ on the mask.
    const Psf d = p.masked(pair.signal), co = p.masked(pair.interference);
    CHECK((d.weights + co.weights - p.masked(mask).weights).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("cell-edge delay threshold") {
    ExperimentConfig e;
    CHECK_THAT(e.delay_threshold(), Catch::Matchers::WithinRel(5e-6, 1e-12));
  }

  SECTION("idempotent and invariant to rescaling with ι") {
    Rng rng = make_rng(3);
    Psf p = empty_psf(g.angle_size(), g.delay_size());
    for (long l = 0; l < p.weights.size(); ++l) p.weights[l] = uniform01(rng) < 0.1 ? uniform01(rng) : 0.0;
    const double tau0 = 7.0 * step;
    const auto a = cluster_by_delay(p, g, tau0, 0.3);
    const auto b = cluster_by_delay(p, g, tau0, 0.3);
    CHECK((a.signal == b.signal).all());
    CHECK((a.interference == b.interference).all());
    check_partition(a, build_mask(p, 0.3));

    Psf scaled = p;
    scaled.weights *= 17.5;
    const auto c = cluster_by_delay(scaled, g, tau0, 0.3 * 17.5);
    CHECK((a.signal == c.signal).all());
    CHECK((a.interference == c.interference).all());
    // The default threshold scales with the PSF.
    const auto d = cluster_by_delay(p, g, tau0);
    const auto e = cluster_by_delay(scaled, g, tau0);
    CHECK((d.signal == e.signal).all());
    CHECK((d.interference == e.interference).all());
  }

  SECTION("errors") {
    CHECK_THROWS_AS(cluster_by_delay(empty_psf(4, 4), g, 1e-6, 0.1), shape_error);
    CHECK_THROWS_AS(cluster_by_delay(empty_psf(g.angle_size(), g.delay_size()), g, -1e-6, 0.1), domain_error);
  }
}

TEST_CASE("partition_rectangles") {
  const int ga = 32, gd = 32;

  SECTION("single blob gives one rectangle") {
    Psf p = empty_psf(ga, gd);
    blob(p, 5, 5, 1.0);
    set(p, 7, 7, 0.5);  // diagonal neighbour, same 8-connected component
    const auto h = partition_rectangles(p, build_mask(p, 0.1), 7);
    REQUIRE(h.size() == 1);
    const auto& r = h.rectangles[0];
    CHECK(r.angle_lo == 5);
    CHECK(r.angle_hi == 7);
    CHECK(r.delay_lo == 5);
    CHECK(r.delay_hi == 7);
  }

  SECTION("seven separated blobs give seven rectangles") {
    Psf p = empty_psf(ga, gd);
    const int corners[7][2] = {{1, 1}, {10, 2}, {20, 1}, {2, 12}, {14, 14}, {26, 20}, {8, 27}};
    for (int b = 0; b < 7; ++b) blob(p, corners[b][0], corners[b][1], 1.0 + b);
    const Mask mask = build_mask(p, 0.1);
    const auto h = partition_rectangles(p, mask, 7);
    REQUIRE(h.size() == 7);
    Mask cover = Mask::Constant(ga, gd, false);
    for (int r = 0; r < 7; ++r) {
      CHECK(h.members[r].count() == 4);
      CHECK_FALSE((cover && h.members[r]).any());
      cover = cover || h.members[r];
      // Each rectangle holds exactly one blob.
      int hits = 0;
      for (const auto& c : corners) hits += h.rectangles[r].contains(c[0], c[1]) ? 1 : 0;
      CHECK(hits == 1);
    }
    CHECK((cover == mask).all());
    // Descending mass.
    for (int r = 1; r < 7; ++r) CHECK(h.mass[r - 1] >= h.mass[r]);
    CHECK(h.rectangles[0].angle_lo == 8);
  }

  SECTION("eight blobs into seven merges the nearest pair") {
    Psf p = empty_psf(ga, gd);
    const int corners[8][2] = {{1, 1}, {12, 1}, {24, 1}, {1, 14}, {14, 14}, {27, 14}, {1, 27}, {20, 27}};
    for (const auto& c : corners) blob(p, c[0], c[1], 1.0);
    // Nearest pair by centroid distance.
    double best = 1e300;
    int pa = -1, pb = -1;
    for (int a = 0; a < 8; ++a)
      for (int b = a + 1; b < 8; ++b) {
        const double d = std::hypot(corners[a][0] - corners[b][0], corners[a][1] - corners[b][1]);
        if (d < best) best = d, pa = a, pb = b;
      }
    REQUIRE(pa == 0);
    REQUIRE(pb == 1);
    const auto h = partition_rectangles(p, build_mask(p, 0.1), 7);
    REQUIRE(h.size() == 7);
    int merged = 0;
    for (int r = 0; r < 7; ++r) {
      const bool has_a = h.rectangles[r].contains(corners[pa][0], corners[pa][1]);
      const bool has_b = h.rectangles[r].contains(corners[pb][0], corners[pb][1]);
      if (has_a && has_b) {
        ++merged;
        CHECK(h.members[r].count() == 8);
      }
    }
    CHECK(merged == 1);
  }

  SECTION("k at least the component count keeps every component") {
    Rng rng = make_rng(12);
    Psf p = empty_psf(ga, gd);
    for (int b = 0; b < 5; ++b) blob(p, 6 * b + 1, static_cast<int>(uniform_index(rng, 30)), 0.5 + b);
    const Mask mask = build_mask(p, 0.1);
    const auto h = partition_rectangles(p, mask, 9);
    CHECK(h.size() == 5);
    for (int r = 0; r < h.size(); ++r) {
      const auto pair = h.masks(r);
      check_partition(pair, mask);
    }
  }

  SECTION("no wrap on the angle axis") {
    Psf p = empty_psf(ga, gd);
    set(p, 0, 4, 1.0);
    set(p, ga - 1, 4, 1.0);
    CHECK(partition_rectangles(p, build_mask(p, 0.1), 7).size() == 2);
  }

  SECTION("errors") {
    Psf p = empty_psf(ga, gd);
    CHECK_THROWS_AS(partition_rectangles(p, build_mask(p, 0.1), 3), domain_error);
    set(p, 0, 0, 1.0);
    CHECK_THROWS_AS(partition_rectangles(p, build_mask(p, 0.1), 0), domain_error);
    CHECK_THROWS_AS(partition_rectangles(p, Mask::Constant(4, 4, true), 3), shape_error);
  }
}

TEST_CASE("supervised_select") {
  Psf p = empty_psf(16, 16);
  blob(p, 2, 2, 3.0);
  blob(p, 10, 1, 2.0);
  blob(p, 6, 11, 1.0);
  const auto h = partition_rectangles(p, build_mask(p, 0.1), 3);
  REQUIRE(h.size() == 3);

  SECTION("genie oracle picks the true cluster regardless of order") {
    auto genie = [](const MaskPair& m) { return OracleVerdict{m.signal(10, 1), 0.0}; };
    const auto sel = supervised_select(h, genie);
    REQUIRE(sel.accepted);
    CHECK(sel.masks.signal(10, 1));
    CHECK(sel.masks.interference(2, 2));
    CHECK(sel.masks.interference(6, 11));
    check_partition(sel.masks, build_mask(p, 0.1));

    ClusterHypothesis reversed = h;
    std::reverse(reversed.rectangles.begin(), reversed.rectangles.end());
    std::reverse(reversed.members.begin(), reversed.members.end());
    const auto sel2 = supervised_select(reversed, genie);
    REQUIRE(sel2.accepted);
    CHECK((sel2.masks.signal == sel.masks.signal).all());
    CHECK((sel2.masks.interference == sel.masks.interference).all());
    CHECK(sel.verdicts.size() == 2);
  }

  SECTION("all failing rejects the packet") {
    const auto sel = supervised_select(h, [](const MaskPair&) { return OracleVerdict{false, 0.1}; });
    CHECK_FALSE(sel.accepted);
    CHECK(sel.index == -1);
    CHECK(sel.verdicts.size() == 3);
  }

  SECTION("single rectangle") {
    Psf one = empty_psf(16, 16);
    blob(one, 4, 4, 1.0);
    const auto h1 = partition_rectangles(one, build_mask(one, 0.1), 1);
    CHECK(supervised_select(h1, [](const MaskPair&) { return OracleVerdict{true, 2.0}; }).accepted);
    CHECK_FALSE(supervised_select(h1, [](const MaskPair&) { return OracleVerdict{false, 0.0}; }).accepted);
  }

  SECTION("empty hypothesis") {
    CHECK_THROWS_AS(supervised_select(ClusterHypothesis{}, [](const MaskPair&) { return OracleVerdict{}; }),
                    domain_error);
  }
}

TEST_CASE("mask csv") {
  MaskPair m{Mask::Constant(2, 2, false), Mask::Constant(2, 2, false)};
  m.signal(0, 0) = true;
  m.interference(1, 1) = true;
  std::ostringstream os;
  io::write_mask_csv(os, m);
  CHECK(os.str() ==
        "angle_index,delay_index,label\n0,0,signal\n1,0,none\n0,1,none\n1,1,interference\n");
}
