#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <limits>
#include <numbers>

#include "beamgrid/error.hpp"
#include "beamgrid/metrics.hpp"
#include "beamgrid/scene.hpp"
#include "support/oracles.hpp"

using namespace beamgrid;
using std::numbers::pi;

namespace {

double building_fraction(const HeightMap& m) {
  std::size_t n = 0;
  for (double h : m.building.data()) n += h > 0.0 ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(m.building.size());
}

// Path length implied by a free-space magnitude with a known extra loss.
double implied_length(const PathParams& p, const SceneConfig& cfg, double loss_db) {
  return cfg.wavelength_m() / (4.0 * pi * p.magnitude) * std::pow(10.0, -loss_db / 20.0);
}

TxSite manual_tx(int r, int c, double h, double az = 0.0, double tilt = pi / 4) {
  TxSite tx;
  tx.pixel = {r, c};
  tx.height_m = h;
  tx.frame = {az, tilt};
  return tx;
}

void put(TensorMap& m, int r, int c, const EffectiveChannelTensor& t) {
  m.set(r, c, t);
  m.set_valid(r, c, true);
}

}  // namespace

TEST_CASE("generate_city") {
  SUBCASE("deterministic") {
    const HeightMap a = generate_city(64, 64, 1);
    const HeightMap b = generate_city(64, 64, 1);
    CHECK(a == b);
    CHECK(!(a == generate_city(64, 64, 2)));
  }
  SUBCASE("zero density") {
    CityStyle style;
    style.building_fraction = 0.0;
    style.vegetation_fraction = 0.0;
    const HeightMap m = generate_city(32, 48, 7, style);
    for (double h : m.building.data()) CHECK(h == 0.0);
    for (double h : m.vegetation.data()) CHECK(h == 0.0);
  }
  SUBCASE("building fraction") {
    const double f = building_fraction(generate_city(64, 64, 2));
    CHECK(f >= 0.15);
    CHECK(f <= 0.45);
  }
  SUBCASE("heights are non-negative and streets stay open") {
    const HeightMap m = generate_city(64, 64, 5);
    for (double h : m.building.data()) CHECK(h >= 0.0);
    for (double h : m.vegetation.data()) CHECK(h >= 0.0);
    CHECK(building_fraction(m) < 0.9);
  }
  SUBCASE("degenerate dims") {
    CHECK_THROWS_AS(generate_city(8, 64, 1), Error);
    CHECK_THROWS_AS(generate_city(64, 0, 1), Error);
  }
}

TEST_CASE("place_tx") {
  SUBCASE("single pixel building") {
    HeightMap m(16, 16);
    m.building(5, 7) = 12.0;
    const TxSite tx = place_tx(m, 99, 3.0);
    CHECK(tx.pixel.row == 5);
    CHECK(tx.pixel.col == 7);
    CHECK(tx.height_m == 15.0);
    CHECK(tx.frame.boresight_azimuth == doctest::Approx(pi / 2));  // north is the first neighbour
    CHECK(tx.frame.downtilt == doctest::Approx(pi / 4));
  }
  SUBCASE("faces the street") {
    HeightMap m(16, 16);
    for (int r = 0; r < 16; ++r) {
      for (int c = 0; c < 8; ++c) m.building(r, c) = 10.0;
    }
    const TxSite tx = place_tx(m, 3, 0.0);
    CHECK(tx.pixel.col == 7);
    CHECK(tx.frame.boresight_azimuth == doctest::Approx(0.0));
  }
  SUBCASE("no building") {
    HeightMap m(16, 16);
    try {
      place_tx(m, 1, 3.0);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kNoValidSite);
    }
  }
  SUBCASE("generated cities") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const HeightMap m = generate_city(64, 64, seed);
      const TxSite tx = place_tx(m, seed, 3.0);
      CHECK(is_edge_pixel(m, tx.pixel.row, tx.pixel.col));
      CHECK(tx.height_m == doctest::Approx(m.building[tx.pixel] + 3.0));
    }
  }
}

TEST_CASE("trace_paths on simple scenes") {
  SceneConfig cfg;

  SUBCASE("flat empty map has one direct path everywhere") {
    HeightMap m(24, 24);
    const SceneChannels ch = trace_paths(m, manual_tx(12, 3, 10.0), cfg);
    for (const auto& c : ch.channels) {
      REQUIRE(c.paths.size() == 1);
      CHECK(c.paths[0].magnitude > 0.0);
    }
    CHECK(extract_walls(m).empty());
  }

  SUBCASE("Rx behind a building wall spanning the map") {
    HeightMap m(16, 32);
    for (int r = 0; r < 16; ++r) {
      for (int c = 10; c < 13; ++c) m.building(r, c) = 30.0;
    }
    const SceneChannels ch = trace_paths(m, manual_tx(5, 3, 5.0), cfg);
    for (int r = 0; r < 16; ++r) {
      for (int c = 13; c < 32; ++c) CHECK(ch.at(r, c).paths.empty());
    }
    for (int r = 0; r < 16; ++r) CHECK(ch.at(r, 11).paths.empty());  // building pixels
  }

  SUBCASE("single wall reflection follows the image method") {
    HeightMap m(32, 32);
    for (int r = 10; r < 21; ++r) {
      for (int c = 20; c < 23; ++c) m.building(r, c) = 10.0;
    }
    const TxSite tx = manual_tx(15, 5, 5.0, 0.0);
    const SceneChannels ch = trace_paths(m, tx, cfg, 1.5);
    const auto& paths = ch.at(12, 10).paths;
    REQUIRE(paths.size() == 2);
    // Tx at the east edge of its pixel: (6, 15.5, 5); Rx centre (10.5, 12.5, 1.5).
    const Point3 txp = tx_position(m, tx);
    CHECK(txp.x == doctest::Approx(6.0));
    CHECK(txp.y == doctest::Approx(15.5));
    const double image_x = 2.0 * 20.0 - 6.0;
    const double expect = std::sqrt(std::pow(image_x - 10.5, 2) + std::pow(15.5 - 12.5, 2) + std::pow(5.0 - 1.5, 2));
    const double direct = std::sqrt(std::pow(10.5 - 6.0, 2) + 9.0 + std::pow(3.5, 2));
    CHECK(oracle::rel_err(implied_length(paths[0], cfg, 0.0), direct) < 1e-9);
    CHECK(oracle::rel_err(implied_length(paths[1], cfg, cfg.reflection_loss_db), expect) < 1e-9);
    // Departure toward the wall (east), arrival from the wall (east of the Rx).
    CHECK(std::cos(paths[1].aod_azimuth) > 0.0);
    CHECK(std::cos(paths[1].aoa_azimuth) > 0.0);
    // The direct path arrives from the Tx, to the west.
    CHECK(std::cos(paths[0].aoa_azimuth) < 0.0);
  }

  SUBCASE("vegetation attenuates the direct path") {
    HeightMap m(16, 32);
    for (int r = 0; r < 16; ++r) m.vegetation(r, 15) = 20.0;
    const TxSite tx = manual_tx(8, 2, 3.0);
    const SceneChannels clear = trace_paths(HeightMap(16, 32), tx, cfg);
    const SceneChannels shaded = trace_paths(m, tx, cfg);
    const double ratio_db = 20.0 * std::log10(clear.at(8, 25).paths[0].magnitude / shaded.at(8, 25).paths[0].magnitude);
    // One canopy column crossed on a shallow slant: (3, 8.5, 3) to (25.5, 8.5, 1.5).
    CHECK(ratio_db == doctest::Approx(cfg.vegetation_db_per_m * std::hypot(1.0, 1.5 / 22.5)).epsilon(1e-9));
  }
}

TEST_CASE("tracer properties on generated cities") {
  SceneConfig cfg;
  for (std::uint64_t seed : {3u, 8u}) {
    const HeightMap m = generate_city(48, 48, seed);
    const TxSite tx = place_tx(m, seed, 3.0);
    const SceneChannels a = trace_paths(m, tx, cfg);

    SUBCASE("deterministic across worker counts") {
      setenv("BEAMGRID_THREADS", "1", 1);
      const SceneChannels single = trace_paths(m, tx, cfg);
      setenv("BEAMGRID_THREADS", "4", 1);
      const SceneChannels four = trace_paths(m, tx, cfg);
      unsetenv("BEAMGRID_THREADS");
      CHECK(a == single);
      CHECK(a == four);
    }
    SUBCASE("path count bound") {
      const std::size_t walls = extract_walls(m).size();
      for (int r = 0; r < m.rows(); ++r) {
        for (int c = 0; c < m.cols(); ++c) {
          CHECK(a.at(r, c).paths.size() <= 1 + walls);
          if (m.is_building(r, c)) CHECK(a.at(r, c).paths.empty());
        }
      }
    }
    SUBCASE("angles are in range") {
      for (const auto& ch : a.channels) {
        for (const auto& p : ch.paths) {
          CHECK(p.phase >= 0.0);
          CHECK(p.phase < 2 * pi);
          CHECK(p.aoa_azimuth >= 0.0);
          CHECK(p.aoa_azimuth < 2 * pi);
          CHECK(p.aod_elevation <= 0.0);
        }
      }
    }
  }
}

TEST_CASE("visibility reciprocity and monotone blockage") {
  const HeightMap m = generate_city(48, 48, 4);
  Rng rng(12);
  int blocked = 0;
  for (int i = 0; i < 3000; ++i) {
    const Point3 p{uniform(rng, 0, 48), uniform(rng, 0, 48), uniform(rng, 0, 35)};
    const Point3 q{uniform(rng, 0, 48), uniform(rng, 0, 48), uniform(rng, 0, 35)};
    const SegmentTrace f = trace_segment(m, p, q);
    const SegmentTrace b = trace_segment(m, q, p);
    CHECK(f.visible == b.visible);
    if (f.visible) CHECK(f.vegetation_m == doctest::Approx(b.vegetation_m).epsilon(1e-9));
    if (!f.visible) ++blocked;
  }
  CHECK(blocked > 100);

  HeightMap taller = m;
  for (int i = 0; i < 300; ++i) {
    const int r = static_cast<int>(uniform_int(rng, 0, 47));
    const int c = static_cast<int>(uniform_int(rng, 0, 47));
    taller.building(r, c) += uniform(rng, 0.0, 15.0);
  }
  Rng pairs(77);
  for (int i = 0; i < 3000; ++i) {
    const Point3 p{uniform(pairs, 0, 48), uniform(pairs, 0, 48), uniform(pairs, 0, 35)};
    const Point3 q{uniform(pairs, 0, 48), uniform(pairs, 0, 48), uniform(pairs, 0, 35)};
    if (!trace_segment(m, p, q).visible) CHECK(!trace_segment(taller, p, q).visible);
  }
}

TEST_CASE("free-space RSS decays along the boresight ray") {
  HeightMap m(16, 64);
  // Tx level with the receivers keeps the elevation beam profile fixed.
  const TxSite tx = manual_tx(8, 0, 1.5, 0.0, pi / 4);
  const SceneChannels ch = trace_paths(m, tx, SceneConfig{}, 1.5);
  const TensorMap t = tensorize(ch, Codebook::dft(8, 4, 4), tx.frame);
  double prev = std::numeric_limits<double>::infinity();
  for (int c = 1; c < 64; ++c) {
    const double best = t.tensor_copy(8, c).max();
    CHECK(best < prev);
    prev = best;
  }
}

TEST_CASE("downscale_tensor_map") {
  const BeamDims d{2, 2, 2};
  SUBCASE("constant map") {
    TensorMap m(8, 8, d);
    for (int r = 0; r < 8; ++r) {
      for (int c = 0; c < 8; ++c) {
        put(m, r, c, EffectiveChannelTensor(d, {1, 2, 3, 4, 5, 6, 7, 8}));
      }
    }
    const TensorMap lo = downscale_tensor_map(m, 4);
    CHECK(lo.rows() == 2);
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 2; ++c) {
        CHECK(lo.valid(r, c));
        CHECK(lo.tensor_copy(r, c) == m.tensor_copy(0, 0));
      }
    }
  }
  SUBCASE("single valid pixel") {
    TensorMap m(4, 4, d);
    put(m, 2, 1, EffectiveChannelTensor(d, {0.1, 0, 0, 0.4, 0, 0, 0, 0.3}));
    const TensorMap lo = downscale_tensor_map(m, 4);
    CHECK(lo.valid(0, 0));
    CHECK(lo.tensor_copy(0, 0) == m.tensor_copy(2, 1));
  }
  SUBCASE("empty block is invalid") {
    TensorMap m(8, 4, d);
    put(m, 0, 0, EffectiveChannelTensor(d, std::vector<double>(8, 1.0)));
    const TensorMap lo = downscale_tensor_map(m, 4);
    CHECK(lo.valid(0, 0));
    CHECK(!lo.valid(1, 0));
  }
  SUBCASE("naive block means") {
    Rng rng(2);
    const TensorMap m = oracle::random_tensor_map(rng, 16, 12, d, 0.3);
    const TensorMap lo = downscale_tensor_map(m, 4);
    for (int R = 0; R < 4; ++R) {
      for (int C = 0; C < 3; ++C) {
        std::vector<double> acc(8, 0.0);
        int n = 0;
        for (int r = 4 * R; r < 4 * R + 4; ++r) {
          for (int c = 4 * C; c < 4 * C + 4; ++c) {
            if (!m.valid(r, c)) continue;
            ++n;
            for (int b = 0; b < 8; ++b) acc[static_cast<std::size_t>(b)] += m.tensor(r, c)[static_cast<std::size_t>(b)];
          }
        }
        CHECK(lo.valid(R, C) == (n > 0));
        for (int b = 0; b < 8 && n > 0; ++b) {
          CHECK(lo.tensor(R, C)[static_cast<std::size_t>(b)] == doctest::Approx(acc[static_cast<std::size_t>(b)] / n).epsilon(1e-12));
        }
      }
    }
  }
  SUBCASE("non-divisible dims") {
    TensorMap m(10, 8, d);
    CHECK_THROWS_AS(downscale_tensor_map(m, 4), Error);
  }
}

TEST_CASE("downscale_consistency") {
  const BeamDims d{2, 2, 2};
  const LinkBudget budget;
  SUBCASE("block-constant map") {
    Rng rng(6);
    const TensorMap base = oracle::random_tensor_map(rng, 2, 2, d);
    TensorMap hi(8, 8, d);
    for (int r = 0; r < 8; ++r) {
      for (int c = 0; c < 8; ++c) put(hi, r, c, base.tensor_copy(r / 4, c / 4));
    }
    const auto s = downscale_consistency(hi, downscale_tensor_map(hi, 4), 1, budget);
    CHECK(s.accuracy == 1.0);
    CHECK(s.tpr == 1.0);
    CHECK(s.samples == 64);
  }
  SUBCASE("full candidate set") {
    Rng rng(7);
    const TensorMap hi = oracle::random_tensor_map(rng, 8, 8, d, 0.2);
    const auto s = downscale_consistency(hi, downscale_tensor_map(hi, 4), 8, budget);
    CHECK(s.accuracy == 1.0);
    CHECK(s.tpr == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("beam boundary crossing a block") {
    TensorMap hi(4, 4, d);
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) {
        std::vector<double> v(8, 1e-10);
        v[c < 1 ? 3 : 5] = 1e-8;
        put(hi, r, c, EffectiveChannelTensor(d, v));
      }
    }
    const auto s = downscale_consistency(hi, downscale_tensor_map(hi, 4), 1, budget);
    CHECK(s.accuracy > 0.0);
    CHECK(s.accuracy < 1.0);
    CHECK(s.tpr >= s.accuracy);
  }
  SUBCASE("shape mismatch") {
    TensorMap hi(8, 8, d);
    TensorMap lo(3, 2, d);
    CHECK_THROWS_AS(downscale_consistency(hi, lo, 1, budget), Error);
  }
}
