#include <doctest.h>

#include <cmath>
#include <numbers>

#include "beamgrid/channel.hpp"
#include "beamgrid/error.hpp"
#include "support/oracles.hpp"

using namespace beamgrid;
using std::numbers::pi;

namespace {

// Global departure direction whose local cosines are (., y, z) for an
// unrotated array.
PathParams on_grid_path(double y, double z, double aoa) {
  const double x = std::sqrt(1.0 - y * y - z * z);
  PathParams p;
  p.magnitude = 1.0;
  p.aod_azimuth = std::atan2(y, x);
  p.aod_elevation = std::asin(z);
  p.aoa_azimuth = aoa;
  return p;
}

}  // namespace

TEST_CASE("steering vector entries") {
  auto a = steering_vector(1, 2.7);
  REQUIRE(a.size() == 1);
  CHECK(a[0] == Complex(1.0, 0.0));

  a = steering_vector(4, 0.0);
  for (auto v : a) CHECK(v == Complex(1.0, 0.0));

  a = steering_vector(2, pi);
  CHECK(a[0].real() == doctest::Approx(1.0));
  CHECK(a[1].real() == doctest::Approx(-1.0));
  CHECK(std::abs(a[1].imag()) < 1e-15);

  a = steering_vector(16, 0.37);
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(std::abs(std::abs(a[k]) - 1.0) < 1e-15);
    CHECK(std::abs(a[k] - std::exp(Complex(0.0, 0.37 * static_cast<double>(k)))) < 1e-12);
  }

  CHECK_THROWS_AS(steering_vector(0, 1.0), Error);
}

TEST_CASE("array frame conventions") {
  SUBCASE("boresight maps to theta 0") {
    const ArrayFrame f{1.1, 0.3};
    const auto d = global_to_array_frame(1.1, -0.3, f);
    CHECK(std::abs(d.theta) < 1e-7);
  }
  SUBCASE("90 degrees in azimuth is orthogonal") {
    const auto d = global_to_array_frame(pi / 2, 0.0, ArrayFrame{0.0, 0.0});
    CHECK(d.theta == doctest::Approx(pi / 2));
  }
  SUBCASE("45 degree downtilt looking 45 degrees down") {
    const ArrayFrame f{0.7, pi / 4};
    const auto d = global_to_array_frame(0.7, -pi / 4, f);
    CHECK(std::abs(d.theta) < 1e-7);
  }
  SUBCASE("matches basis-vector projection") {
    Rng rng(11);
    for (int i = 0; i < 500; ++i) {
      const ArrayFrame f = oracle::random_frame(rng);
      const double az = uniform(rng, 0, 2 * pi);
      const double el = uniform(rng, -pi / 2, pi / 2);
      const auto d = global_to_array_frame(az, el, f);
      const auto l = oracle::local_cosines(az, el, f);
      CHECK(std::cos(d.theta) == doctest::Approx(l.x).epsilon(1e-12));
      CHECK(std::sin(d.theta) * std::cos(d.phi) == doctest::Approx(l.y).epsilon(1e-12));
      CHECK(std::sin(d.theta) * std::sin(d.phi) == doctest::Approx(l.z).epsilon(1e-12));
    }
  }
}

TEST_CASE("beamspace angles") {
  auto b = beamspace_angles(0.0, 0.0);
  CHECK(b.varphi == 0.0);
  CHECK(b.vartheta == 0.0);

  b = beamspace_angles(0.0, pi / 2);
  CHECK(b.varphi == doctest::Approx(pi));
  CHECK(std::abs(b.vartheta) < 1e-15);

  b = beamspace_angles(pi / 2, pi / 2);
  CHECK(std::abs(b.varphi) < 1e-15);
  CHECK(b.vartheta == doctest::Approx(pi));

  // The elevation phase follows sin(theta) sin(phi).
  b = beamspace_angles(0.4, 0.9);
  CHECK(b.vartheta == doctest::Approx(pi * std::sin(0.9) * std::sin(0.4)));
}

TEST_CASE("sector selection") {
  auto s = sector_select(0.0, 4);
  CHECK(s == std::vector<double>{1, 0, 0, 0});
  s = sector_select(pi, 4);
  CHECK(s == std::vector<double>{0, 0, 1, 0});
  s = sector_select(2 * pi + 0.1, 4);
  CHECK(s == std::vector<double>{1, 0, 0, 0});
  CHECK(sector_index(-0.1, 4) == 3);

  SUBCASE("partition") {
    Rng rng(3);
    for (int nr : {1, 2, 3, 4, 7}) {
      for (int i = 0; i < 200; ++i) {
        const auto v = sector_select(uniform(rng, -10, 10), nr);
        double ones = 0;
        for (double x : v) {
          CHECK((x == 0.0 || x == 1.0));
          ones += x;
        }
        CHECK(ones == 1.0);
      }
      std::vector<double> acc(static_cast<std::size_t>(nr), 0.0);
      for (int i = 0; i < nr; ++i) {
        const auto v = sector_select(2 * pi * (i + 0.5) / nr, nr);
        for (int j = 0; j < nr; ++j) acc[static_cast<std::size_t>(j)] += v[static_cast<std::size_t>(j)];
      }
      for (double x : acc) CHECK(x == 1.0);
    }
  }
}

TEST_CASE("dft codebook") {
  SUBCASE("single beam") {
    const Codebook cb = dft_codebook(1, 1, 1);
    const Beam b = cb.beam(0);
    CHECK(b.u.size() == 1);
    CHECK(b.u[0] == Complex(1.0, 0.0));
    CHECK(b.v[0] == Complex(1.0, 0.0));
    CHECK(b.w == std::vector<double>{1.0});
  }
  SUBCASE("two-point vectors") {
    const Codebook cb = dft_codebook(2, 1, 1);
    const double h = 1.0 / std::sqrt(2.0);
    CHECK(std::abs(cb.azimuth(0)[0] - Complex(h, 0)) < 1e-15);
    CHECK(std::abs(cb.azimuth(0)[1] - Complex(h, 0)) < 1e-15);
    CHECK(std::abs(cb.azimuth(1)[0] - Complex(h, 0)) < 1e-15);
    CHECK(std::abs(cb.azimuth(1)[1] - Complex(-h, 0)) < 1e-15);
  }
  SUBCASE("8x4x4 gram matrices") {
    const Codebook cb = dft_codebook(8, 4, 4);
    CHECK(cb.dims().size() == 128);
    for (int i = 0; i < 8; ++i) {
      for (int j = 0; j < 8; ++j) {
        const Complex g = inner(cb.azimuth(i), cb.azimuth(j));
        CHECK(std::abs(g - Complex(i == j ? 1.0 : 0.0, 0.0)) < 1e-12);
      }
    }
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        const Complex g = inner(cb.elevation(i), cb.elevation(j));
        CHECK(std::abs(g - Complex(i == j ? 1.0 : 0.0, 0.0)) < 1e-12);
      }
    }
    CHECK(cb.unitarity_error() < 1e-12);
  }
  SUBCASE("flat index convention") {
    const BeamDims d{8, 4, 4};
    for (int f = 0; f < d.size(); ++f) {
      const BeamIndex b = d.unflat(f);
      CHECK(f == b.ia * 16 + b.ie * 4 + b.ir);
      CHECK(d.flat(b) == f);
    }
    const Codebook cb = dft_codebook(8, 4, 4);
    const Beam b = cb.beam(BeamIndex{3, 1, 2});
    CHECK(b.index.ia == 3);
    CHECK(b.w == std::vector<double>{0, 0, 1, 0});
  }
  SUBCASE("rejects non-unit vectors") {
    CHECK_THROWS_AS(Codebook({CVector{Complex(1, 0), Complex(1, 0)}, CVector{Complex(1, 0), Complex(-1, 0)}},
                             {CVector{Complex(1, 0)}}, 1),
                    Error);
  }
}

TEST_CASE("beam gain") {
  const Codebook cb = dft_codebook(8, 4, 4);
  const ArrayFrame f{0.0, 0.0};
  MultipathChannel ch;
  CHECK(beam_gain(ch, cb.beam(0), f) == 0.0);
  CHECK(instantaneous_gain(ch, cb.beam(0), f) == 0.0);

  // varphi = pi y = -2 pi ia / Na, vartheta = pi z = -2 pi ie / Ne.
  const int ia = 1;
  const int ie = 1;
  const int ir = 2;
  ch.paths.push_back(on_grid_path(-2.0 * ia / 8, -2.0 * ie / 4, 2 * pi * (ir + 0.5) / 4));
  CHECK(beam_gain(ch, cb.beam(BeamIndex{ia, ie, ir}), f) == doctest::Approx(32.0).epsilon(1e-12));
  for (int other = 0; other < 8; ++other) {
    if (other == ia) continue;
    CHECK(beam_gain(ch, cb.beam(BeamIndex{other, ie, ir}), f) < 1e-10);
  }
  CHECK(beam_gain(ch, cb.beam(BeamIndex{ia, ie, 0}), f) == 0.0);

  SUBCASE("single path instantaneous equals average") {
    ch.paths[0].phase = 1.234;
    const Beam b = cb.beam(BeamIndex{ia, ie, ir});
    CHECK(instantaneous_gain(ch, b, f) == doctest::Approx(beam_gain(ch, b, f)).epsilon(1e-12));
  }
  SUBCASE("destructive pair") {
    MultipathChannel two = ch;
    two.paths.push_back(ch.paths[0]);
    two.paths[0].phase = 0.0;
    two.paths[1].phase = pi;
    CHECK(instantaneous_gain(two, cb.beam(BeamIndex{ia, ie, ir}), f) < 1e-20);
  }
  SUBCASE("phase invariance") {
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
      MultipathChannel c = oracle::random_channel(rng, 4);
      const ArrayFrame fr = oracle::random_frame(rng);
      const double g = beam_gain(c, cb.beam(i), fr);
      for (auto& p : c.paths) p.phase = uniform(rng, 0, 2 * pi);
      CHECK(beam_gain(c, cb.beam(i), fr) == g);
    }
  }
}

TEST_CASE("effective tensor") {
  const Codebook cb = dft_codebook(8, 4, 4);
  SUBCASE("empty channel") {
    const auto t = effective_tensor(MultipathChannel{}, cb, ArrayFrame{});
    CHECK(t.max() == 0.0);
    CHECK(!optimal_beam(t).valid);
    CHECK(optimal_beam(t).flat == 0);
  }
  SUBCASE("single path is rank one") {
    Rng rng(8);
    const MultipathChannel ch = oracle::random_channel(rng, 1);
    const ArrayFrame f = oracle::random_frame(rng);
    const auto t = effective_tensor(ch, cb, f);
    const int sector = sector_index(ch.paths[0].aoa_azimuth, 4);
    const double c2 = ch.paths[0].magnitude * ch.paths[0].magnitude;
    const auto bs = departure_beamspace(ch.paths[0], f);
    for (int ia = 0; ia < 8; ++ia) {
      const double ga = std::norm(inner(cb.azimuth(ia), steering_vector(8, bs.varphi)));
      for (int ie = 0; ie < 4; ++ie) {
        const double ge = std::norm(inner(cb.elevation(ie), steering_vector(4, bs.vartheta)));
        for (int ir = 0; ir < 4; ++ir) {
          const double expect = ir == sector ? c2 * ga * ge : 0.0;
          CHECK(t.at({ia, ie, ir}) == doctest::Approx(expect).epsilon(1e-12));
        }
      }
    }
  }
  SUBCASE("matches per-beam loops") {
    Rng rng(21);
    for (int i = 0; i < 30; ++i) {
      const MultipathChannel ch = oracle::random_channel(rng, 3);
      const ArrayFrame f = oracle::random_frame(rng);
      const auto t = effective_tensor(ch, cb, f);
      const auto brute = oracle::brute_tensor(ch, cb.dims(), f);
      for (int b = 0; b < 128; ++b) {
        CHECK(std::abs(t[b] - brute[static_cast<std::size_t>(b)]) <= 1e-10 * std::max(1e-300, brute[b] + t.max()));
        CHECK(t[b] == doctest::Approx(beam_gain(ch, cb.beam(b), f)).epsilon(1e-10));
      }
    }
  }
  SUBCASE("conservation") {
    Rng rng(4);
    for (int i = 0; i < 200; ++i) {
      const MultipathChannel ch = oracle::random_channel(rng, 1);
      const auto t = effective_tensor(ch, cb, oracle::random_frame(rng));
      const double c2 = ch.paths[0].magnitude * ch.paths[0].magnitude;
      CHECK(oracle::rel_err(t.sum(), c2 * 32.0) < 1e-9);
    }
  }
}

TEST_CASE("optimal beam") {
  const BeamDims d{8, 4, 4};
  EffectiveChannelTensor t(d);
  t.at({3, 1, 2}) = 0.5;
  auto ob = optimal_beam(t);
  CHECK(ob.valid);
  CHECK(ob.index.ia == 3);
  CHECK(ob.index.ie == 1);
  CHECK(ob.index.ir == 2);

  EffectiveChannelTensor flat(d, std::vector<double>(128, 2.0));
  ob = optimal_beam(flat);
  CHECK(ob.flat == 0);
  CHECK(ob.valid);

  Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> v(128);
    for (auto& x : v) x = uniform01(rng);
    int best = 0;
    for (int b = 1; b < 128; ++b) {
      if (v[static_cast<std::size_t>(b)] > v[static_cast<std::size_t>(best)]) best = b;
    }
    CHECK(optimal_beam(EffectiveChannelTensor(d, v)).flat == best);
    CHECK(rank_descending(v) == oracle::sort_desc(v));
  }
}

TEST_CASE("phase-averaged gain is the mean of random-phase gains") {
  const Codebook cb = dft_codebook(2, 2, 2);
  Rng rng(17);
  MultipathChannel ch = oracle::random_channel(rng, 3);
  for (auto& p : ch.paths) p.aoa_azimuth = 0.3;  // same sector so the paths interfere
  const ArrayFrame f = oracle::random_frame(rng);
  const Beam b = cb.beam(BeamIndex{0, 0, 0});
  const double rss = beam_gain(ch, b, f);
  double mean = 0.0;
  const int draws = 20000;
  for (int i = 0; i < draws; ++i) {
    for (auto& p : ch.paths) p.phase = uniform(rng, 0, 2 * pi);
    mean += instantaneous_gain(ch, b, f);
  }
  mean /= draws;
  CHECK(oracle::rel_err(mean, rss) < 0.05);
}
