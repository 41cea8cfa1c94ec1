#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "hsittt/augment.hpp"

using namespace hsittt;

TEST_CASE("sample_mixing_matrix") {
  Rng rng(1);
  const auto one = sample_mixing_matrix(1, rng);
  CHECK(one(0, 0) == 1.0);

  for (int k = 0; k < 100; ++k) {
    const auto b = sample_mixing_matrix(7, rng);
    for (std::size_t r = 0; r < 7; ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < 7; ++c) {
        CHECK(b(r, c) >= 0.0);
        CHECK(b(r, c) <= 1.0);
        sum += b(r, c);
      }
      CHECK(std::abs(sum - 1.0) <= 1e-6);
    }
  }

  Rng a(42), b(42);
  CHECK(sample_mixing_matrix(4, a) == sample_mixing_matrix(4, b));

  // Entries are the uniform draws of one row divided by their sum.
  Rng c(42), d(42);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto m = sample_mixing_matrix(3, c);
  for (std::size_t r = 0; r < 3; ++r) {
    double raw[3];
    for (double& x : raw) x = u(d);
    const double sum = raw[0] + raw[1] + raw[2];
    for (std::size_t col = 0; col < 3; ++col) {
      CHECK(m(r, col) == doctest::Approx(raw[col] / sum).epsilon(1e-15));
    }
  }
}

TEST_CASE("MixingMatrix validation") {
  CHECK_THROWS_AS(MixingMatrix(2, {0.5, 0.5, 0.5}), ValidationError);
  CHECK_THROWS_AS(MixingMatrix(2, {0.5, 0.6, 0.5, 0.5}), ValidationError);
  CHECK_THROWS_AS(MixingMatrix(2, {1.5, -0.5, 0.5, 0.5}), ValidationError);
  CHECK_NOTHROW(MixingMatrix(2, {1.0, 0.0, 0.25, 0.75}));
}

TEST_CASE("spectral_mixup") {
  Rng rng(3);
  const auto x = testing::random_volume<float>(3, 4, 4, 5);
  const auto b = sample_mixing_matrix(3, rng);
  CHECK(spectral_mixup(x, b, 1.0) == x);

  // Constant spectrum: every band holds the same value at each pixel.
  Volume<float> flat(5, 4, 4);
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t xx = 0; xx < 4; ++xx) {
      for (std::size_t s = 0; s < 5; ++s) flat.at(s, y, xx) = 0.1f * (y + 1) + 0.05f * xx;
    }
  }
  const auto b5 = sample_mixing_matrix(5, rng);
  for (double lambda : {0.0, 0.3, 0.5, 1.0}) {
    const auto out = spectral_mixup(flat, b5, lambda);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      CHECK(std::abs(out.data[i] - flat.data[i]) <= 1e-6);
    }
  }

  const auto got = spectral_mixup(x, b, 0.5);
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t xx = 0; xx < 4; ++xx) {
      for (std::size_t r = 0; r < 3; ++r) {
        double bx = 0.0;
        for (std::size_t c = 0; c < 3; ++c) bx += b(r, c) * x.at(c, y, xx);
        const double want = 0.5 * x.at(r, y, xx) + 0.5 * bx;
        CHECK(std::abs(got.at(r, y, xx) - want) <= 1e-6);
      }
    }
  }

  CHECK_THROWS_AS(spectral_mixup(x, b5, 0.5), ValidationError);
  CHECK_THROWS_AS(spectral_mixup(x, b, 1.5), ValidationError);
}

TEST_CASE("spectral_mixup invariants") {
  Rng rng(9);
  const auto x = testing::random_volume<double>(6, 5, 5, 8, 0.2, 0.7);
  const auto b = sample_mixing_matrix(6, rng);
  const auto out = spectral_mixup(x, b, 0.5);
  const auto [lo, hi] = std::minmax_element(x.data.begin(), x.data.end());
  for (double v : out.data) {
    CHECK(v >= *lo - 1e-6);
    CHECK(v <= *hi + 1e-6);
  }

  auto ax = x;
  for (double& v : ax.data) v *= 0.4;
  const auto lhs = spectral_mixup(ax, b, 0.3);
  const auto rhs = spectral_mixup(x, b, 0.3);
  for (std::size_t i = 0; i < lhs.data.size(); ++i) {
    CHECK(std::abs(lhs.data[i] - 0.4 * rhs.data[i]) <= 1e-9);
  }

  const auto at0 = spectral_mixup(x, b, 0.0);
  const auto at1 = spectral_mixup(x, b, 1.0);
  const auto mid = spectral_mixup(x, b, 0.3);
  for (std::size_t i = 0; i < mid.data.size(); ++i) {
    CHECK(std::abs(mid.data[i] - (0.3 * at1.data[i] + 0.7 * at0.data[i])) <= 1e-9);
  }

  Rng r1(11), r2(11);
  const auto o1 = spectral_mixup(x, sample_mixing_matrix(6, r1), 0.5);
  const auto o2 = spectral_mixup(x, sample_mixing_matrix(6, r2), 0.5);
  CHECK(o1 == o2);
}

TEST_CASE("make_augmented_pair") {
  Rng rng(4);
  const auto hr = testing::random_volume<float>(3, 8, 8, 2);
  const auto b = sample_mixing_matrix(3, rng);
  const ScaleFactor two(2);

  const auto [lr1, hr1] = make_augmented_pair(hr, b, 1.0, two);
  CHECK(hr1 == hr);
  CHECK(lr1 == downsample(hr, two));

  const auto [lr2, hr2] = make_augmented_pair(hr, b, 0.5, two);
  const auto mixed = spectral_mixup(hr, b, 0.5);
  CHECK(hr2 == mixed);
  CHECK(lr2 == downsample(mixed, two));

  const Volume<float> flat(3, 8, 8, 0.4f);
  const auto [lr3, hr3] = make_augmented_pair(flat, b, 0.5, two);
  for (float v : hr3.data) CHECK(std::abs(v - 0.4f) <= 1e-6);
  for (float v : lr3.data) CHECK(std::abs(v - 0.4f) <= 1e-6);

  const HSICube cube = HSICube::create(hr);
  const HSICube mixed_cube = spectral_mixup(cube, b, 0.5);
  CHECK(mixed_cube.volume() == mixed);
}
