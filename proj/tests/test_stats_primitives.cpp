#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "osrpc/errors.hpp"
#include "osrpc/linalg.hpp"
#include "osrpc/rng.hpp"
#include "osrpc/sampling.hpp"
#include "osrpc/special.hpp"
#include "support/oracles.hpp"

using namespace osrpc;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

TEST_CASE("rng streams are deterministic and stream-separated") {
  RngStream a(42, 7), b(42, 7), c(42, 8);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 10000; ++i) {
    const std::uint64_t x = a.next_u64();
    if (x != b.next_u64()) all_equal = false;
    if (x != c.next_u64()) any_diff = true;
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("derived seeds differ across tags") {
  CHECK(derive_seed(1, {0, 1, 2}) != derive_seed(1, {0, 1, 3}));
  CHECK(derive_seed(1, {0, 1, 2}) != derive_seed(2, {0, 1, 2}));
  CHECK(derive_seed(1, {0, 1, 2}) == derive_seed(1, {0, 1, 2}));
}

TEST_CASE("normal cdf matches the series oracle") {
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(normal_cdf(1.0) == doctest::Approx(0.841345).epsilon(1e-6));
  for (double x = -6.0; x <= 6.0; x += 0.25) {
    CHECK(normal_cdf(x) == doctest::Approx(oracle::normal_cdf_series(x)).epsilon(1e-12));
  }
  CHECK(normal_sf(3.0) == doctest::Approx(1.0 - oracle::normal_cdf_series(3.0)).epsilon(1e-12));
}

TEST_CASE("normal quantile matches a bisection oracle and round-trips") {
  const double q975 = oracle::quantile_bisect([](double x) { return oracle::normal_cdf_series(x); }, 0.975);
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959964).epsilon(1e-6));
  CHECK(normal_quantile(0.975) == doctest::Approx(q975).epsilon(1e-9));
  for (double x = -6.0; x <= 6.0; x += 0.1) {
    CHECK(normal_quantile(normal_cdf(x)) == doctest::Approx(x).epsilon(1e-10));
  }
  CHECK_THROWS_AS(normal_quantile(0.0), InvalidParameterError);
  CHECK_THROWS_AS(normal_quantile(1.0), InvalidParameterError);
}

TEST_CASE("log_normal_cdf stays finite deep in the left tail") {
  CHECK(log_normal_cdf(-1.0) == doctest::Approx(std::log(normal_cdf(-1.0))).epsilon(1e-12));
  const double v = log_normal_cdf(-45.0);
  CHECK(std::isfinite(v));
  CHECK(v < -900.0);
}

TEST_CASE("dirichlet draws are simplexes with the right means") {
  RngStream rng(1, 0);
  SUBCASE("symmetric three-cell") {
    std::vector<double> conc{1.0, 1.0, 1.0};
    std::vector<double> mean(3, 0.0);
    const int N = 100000;
    for (int t = 0; t < N; ++t) {
      const auto draw = sample_dirichlet(conc, rng);
      double sum = 0.0;
      for (int k = 0; k < 3; ++k) {
        CHECK(draw[k] > 0.0);
        sum += draw[k];
        mean[k] += draw[k];
      }
      CHECK(std::fabs(sum - 1.0) <= 1e-12);
    }
    for (int k = 0; k < 3; ++k) {
      CHECK(mean[k] / N == doctest::Approx(1.0 / 3).epsilon(0.01));
    }
  }
  SUBCASE("posterior-shaped concentration from a full cluster") {
    // alpha=1, n=1200 all in cell 1, 50 cells: mean of cell 1 = 1201/1250
    std::vector<double> conc(50, 1.0);
    conc[0] = 1201.0;
    double mean0 = 0.0;
    const int N = 100000;
    for (int t = 0; t < N; ++t) mean0 += sample_dirichlet(conc, rng)[0];
    CHECK(mean0 / N == doctest::Approx(1201.0 / 1250.0).epsilon(2e-4));
  }
  SUBCASE("single cell is exactly one") {
    std::vector<double> conc{5.0};
    const auto draw = sample_dirichlet(conc, rng);
    CHECK(draw.size() == 1);
    CHECK(draw[0] == 1.0);
  }
  SUBCASE("non-positive concentration is rejected") {
    std::vector<double> bad{1.0, 0.0};
    CHECK_THROWS_AS(sample_dirichlet(bad, rng), InvalidParameterError);
  }
}

TEST_CASE("gamma and beta draws match reference CDFs") {
  RngStream rng(2, 0);
  const int N = 100000;
  SUBCASE("gamma shape 2.5 rate 1.5") {
    std::vector<double> draws(N);
    for (auto& v : draws) v = sample_gamma(2.5, 1.5, rng);
    CHECK(oracle::ks_pvalue(draws, [](double x) { return oracle::gamma_cdf(2.5, 1.5, x); }) > 0.01);
  }
  SUBCASE("gamma shape below one") {
    std::vector<double> draws(N);
    for (auto& v : draws) v = sample_gamma(0.4, 1.0, rng);
    CHECK(oracle::ks_pvalue(draws, [](double x) { return oracle::gamma_cdf(0.4, 1.0, x); }) > 0.01);
  }
  SUBCASE("beta(3, 7)") {
    std::vector<double> draws(N);
    for (auto& v : draws) v = sample_beta(3.0, 7.0, rng);
    CHECK(oracle::ks_pvalue(draws, [](double x) { return oracle::beta_cdf(3.0, 7.0, x); }) > 0.01);
  }
}

TEST_CASE("truncated normal sampling") {
  RngStream rng(3, 0);
  SUBCASE("untruncated case recovers the normal mean") {
    double mean = 0.0;
    const int N = 100000;
    for (int t = 0; t < N; ++t) mean += sample_truncnorm(0.0, 1.0, {}, rng);
    CHECK(std::fabs(mean / N) < 0.02);
  }
  SUBCASE("half-normal mean matches the quadrature oracle") {
    TruncationBounds b{0.0, kInf};
    double mean = 0.0;
    const int N = 100000;
    for (int t = 0; t < N; ++t) mean += sample_truncnorm(0.0, 1.0, b, rng);
    const double expect = oracle::truncnorm_mean_quadrature(0.0, 1.0, 0.0, 40.0);
    CHECK(expect == doctest::Approx(std::sqrt(2.0 / M_PI)).epsilon(1e-6));
    CHECK(mean / N == doctest::Approx(expect).epsilon(0.01));
  }
  SUBCASE("bounds are respected under an extreme mean") {
    TruncationBounds b{0.0, 1.0};
    for (int t = 0; t < 20000; ++t) {
      const double v = sample_truncnorm(10.0, 1.0, b, rng);
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }
  SUBCASE("two-sided far tail uses the rejection path and matches quadrature") {
    TruncationBounds b{4.5, 5.0};
    double mean = 0.0;
    const int N = 100000;
    for (int t = 0; t < N; ++t) {
      const double v = sample_truncnorm(0.0, 1.0, b, rng);
      CHECK(v > 4.5);
      CHECK(v < 5.0);
      mean += v;
    }
    CHECK(mean / N ==
          doctest::Approx(oracle::truncnorm_mean_quadrature(0.0, 1.0, 4.5, 5.0)).epsilon(0.005));
  }
  SUBCASE("left far tail mirrors the right") {
    TruncationBounds b{-5.0, -4.5};
    for (int t = 0; t < 10000; ++t) {
      const double v = sample_truncnorm(0.0, 1.0, b, rng);
      CHECK(v > -5.0);
      CHECK(v < -4.5);
    }
  }
  SUBCASE("negligible interval mass raises a numeric error") {
    TruncationBounds b{40.0, 40.5};
    CHECK_THROWS_AS(sample_truncnorm(0.0, 1.0, b, rng), NumericError);
  }
  SUBCASE("invalid bounds are rejected") {
    TruncationBounds b{1.0, 1.0};
    CHECK_THROWS_AS(sample_truncnorm(0.0, 1.0, b, rng), InvalidParameterError);
  }
  SUBCASE("randomized bounds are never violated") {
    RngStream gen(77, 0);
    for (int t = 0; t < 1000000; ++t) {
      const double mean = 4.0 * (gen.uniform() - 0.5);
      const double sd = 0.1 + 3.0 * gen.uniform();
      double lo = mean + sd * 12.0 * (gen.uniform() - 0.5);
      double hi = lo + 6.0 * sd * gen.uniform_pos();
      const double v = sample_truncnorm(mean, sd, {lo, hi}, gen);
      CHECK(v > lo);
      CHECK(v < hi);
    }
  }
}

TEST_CASE("multivariate normal sampling") {
  RngStream rng(4, 0);
  SUBCASE("identity covariance moments") {
    const std::vector<double> mean{0.0, 0.0};
    const Matrix cov = Matrix::identity(2);
    double m0 = 0.0, m1 = 0.0, c01 = 0.0, v0 = 0.0, v1 = 0.0;
    const int N = 100000;
    for (int t = 0; t < N; ++t) {
      const auto v = sample_mvn(mean, cov, rng);
      m0 += v[0];
      m1 += v[1];
      v0 += v[0] * v[0];
      v1 += v[1] * v[1];
      c01 += v[0] * v[1];
    }
    CHECK(std::fabs(m0 / N) < 0.02);
    CHECK(std::fabs(m1 / N) < 0.02);
    CHECK(v0 / N == doctest::Approx(1.0).epsilon(0.02));
    CHECK(v1 / N == doctest::Approx(1.0).epsilon(0.02));
    CHECK(std::fabs(c01 / N) < 0.02);
  }
  SUBCASE("scalar case matches normal(3, 2)") {
    const std::vector<double> mean{3.0};
    Matrix cov(1, 1);
    cov(0, 0) = 4.0;
    double m = 0.0, v = 0.0;
    const int N = 100000;
    for (int t = 0; t < N; ++t) {
      const double x = sample_mvn(mean, cov, rng)[0];
      m += x;
      v += (x - 3.0) * (x - 3.0);
    }
    CHECK(m / N == doctest::Approx(3.0).epsilon(0.01));
    CHECK(v / N == doctest::Approx(4.0).epsilon(0.02));
  }
  SUBCASE("correlation 0.9 is recovered") {
    const std::vector<double> mean{0.0, 0.0};
    Matrix cov = Matrix::identity(2);
    cov(0, 1) = cov(1, 0) = 0.9;
    double c01 = 0.0;
    const int N = 100000;
    for (int t = 0; t < N; ++t) {
      const auto v = sample_mvn(mean, cov, rng);
      c01 += v[0] * v[1];
    }
    CHECK(c01 / N == doctest::Approx(0.9).epsilon(0.025));
  }
  SUBCASE("non-SPD covariance names the failing minor") {
    Matrix bad = Matrix::identity(3);
    bad(1, 1) = -1.0;
    const std::vector<double> mean{0.0, 0.0, 0.0};
    try {
      sample_mvn(mean, bad, rng);
      FAIL("expected DecompositionError");
    } catch (const DecompositionError& e) {
      CHECK(e.leading_minor() == 2);
    }
  }
}

TEST_CASE("cholesky solve round-trip") {
  Matrix a(3, 3);
  a(0, 0) = 4.0; a(0, 1) = 1.0; a(0, 2) = 0.5;
  a(1, 0) = 1.0; a(1, 1) = 3.0; a(1, 2) = 0.2;
  a(2, 0) = 0.5; a(2, 1) = 0.2; a(2, 2) = 2.0;
  const Matrix L = cholesky(a);
  const std::vector<double> b{1.0, 2.0, 3.0};
  const auto x = chol_solve(L, b);
  const auto back = matvec(a, x);
  for (int i = 0; i < 3; ++i) CHECK(back[i] == doctest::Approx(b[i]).epsilon(1e-12));
}
