#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "selma/rng.hpp"
#include "selma/schedule.hpp"
#include "selma/types.hpp"

using namespace selma;

TEST_CASE("alphas_bar starts at exactly 1 and equals the running product") {
  const NoiseSchedule s = make_schedule(50);
  REQUIRE(s.T == 50);
  REQUIRE(static_cast<int>(s.betas.size()) == 50);
  REQUIRE(static_cast<int>(s.alphas_bar.size()) == 51);
  CHECK(s.alphas_bar[0] == 1.0f);
  float prod = 1.0f;
  for (int t = 1; t <= s.T; ++t) {
    prod *= 1.0f - s.betas[t - 1];
    CHECK(s.alphas_bar[t] == doctest::Approx(prod).epsilon(1e-6));
    CHECK(s.alphas_bar[t] < s.alphas_bar[t - 1]);
    CHECK(s.alphas_bar[t] > 0.0f);
  }
}

TEST_CASE("betas interpolate linearly between the endpoints") {
  const NoiseSchedule s = make_schedule(11, 0.1f, 0.2f);
  CHECK(s.betas.front() == doctest::Approx(0.1f));
  CHECK(s.betas.back() == doctest::Approx(0.2f));
  CHECK(s.betas[5] == doctest::Approx(0.15f));
  for (std::size_t i = 1; i < s.betas.size(); ++i)
    CHECK(s.betas[i] > s.betas[i - 1]);
}

TEST_CASE("a single step schedule with beta 0.5 halves alpha_bar") {
  const NoiseSchedule s = make_schedule(1, 0.5f, 0.9f);
  CHECK(s.betas.size() == 1);
  CHECK(s.betas[0] == doctest::Approx(0.5f));
  CHECK(s.alphas_bar[1] == doctest::Approx(0.5f));
}

TEST_CASE("make_schedule rejects bad arguments") {
  CHECK_THROWS_AS(make_schedule(0), std::invalid_argument);
  CHECK_THROWS_AS(make_schedule(-3), std::invalid_argument);
  CHECK_THROWS_AS(make_schedule(10, 0.0f, 0.02f), std::invalid_argument);
  CHECK_THROWS_AS(make_schedule(10, 0.02f, 0.01f), std::invalid_argument);
  CHECK_THROWS_AS(make_schedule(10, 0.0001f, 1.0f), std::invalid_argument);
}

TEST_CASE("q_sample at t=0 returns x0 unchanged") {
  const NoiseSchedule s = make_schedule(10);
  Rng rng(1, streams::kNoise);
  VectorF x0(kImageDim), eps(kImageDim);
  for (int i = 0; i < kImageDim; ++i) {
    x0[i] = static_cast<float>(rng.next_double());
    eps[i] = static_cast<float>(rng.normal());
  }
  const VectorF xt = q_sample(x0, 0, eps, s);
  CHECK((xt - x0).norm() == 0.0f);
}

TEST_CASE("q_sample applies the closed-form mixture") {
  // One step with beta = 0.75 gives alpha_bar(1) = 0.25:
  // x_t = 0.5 x0 + sqrt(0.75) eps.
  NoiseSchedule s = make_schedule(1, 0.75f, 0.9f);
  VectorF x0 = VectorF::Constant(kImageDim, 1.0f);
  VectorF eps = VectorF::Constant(kImageDim, 2.0f);
  const VectorF xt = q_sample(x0, 1, eps, s);
  const float expect = 0.5f + std::sqrt(0.75f) * 2.0f;
  for (int i = 0; i < kImageDim; ++i)
    CHECK(xt[i] == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("q_sample with zero noise scales by sqrt(alpha_bar)") {
  const NoiseSchedule s = make_schedule(25);
  VectorF x0 = VectorF::Constant(kImageDim, 1.0f);
  VectorF eps = VectorF::Zero(kImageDim);
  for (int t : {1, 10, 25}) {
    const VectorF xt = q_sample(x0, t, eps, s);
    const float expect = std::sqrt(s.alphas_bar[t]);
    CHECK(xt[0] == doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("q_sample validates t and vector sizes") {
  const NoiseSchedule s = make_schedule(5);
  VectorF x0 = VectorF::Zero(kImageDim);
  VectorF eps = VectorF::Zero(kImageDim);
  CHECK_THROWS_AS(q_sample(x0, -1, eps, s), std::out_of_range);
  CHECK_THROWS_AS(q_sample(x0, 6, eps, s), std::out_of_range);
  VectorF small = VectorF::Zero(10);
  CHECK_THROWS_AS(q_sample(small, 1, eps, s), std::invalid_argument);
  CHECK_THROWS_AS(q_sample(x0, 1, small, s), std::invalid_argument);
}
