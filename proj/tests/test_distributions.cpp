#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "hifm/distributions.hpp"
#include "hifm/rng.hpp"
#include "support/oracles.hpp"

using namespace hifm;

TEST_CASE("rng reproducibility and stream independence", "[distributions]") {
  Rng a(42, 7), b(42, 7);
  for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());

  Rng c(42, 8);
  int same = 0;
  Rng a2(42, 7);
  for (int i = 0; i < 1000; ++i) {
    if (a2.next_u64() == c.next_u64()) ++same;
  }
  REQUIRE(same == 0);

  RngHandle h{42, 7};
  Rng d1 = substream_rng(h, 1, 2, 3);
  Rng d2 = substream_rng(h, 1, 2, 3);
  Rng d3 = substream_rng(h, 1, 2, 4);
  REQUIRE(d1.next_u64() == d2.next_u64());
  REQUIRE(d1.next_u64() != d3.next_u64());
}

TEST_CASE("gamma sampler moments", "[distributions]") {
  Rng rng(101);
  const int n = 1000000;

  SECTION("exponential case mean 1") {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += sample_gamma(1.0, 1.0, rng);
    REQUIRE(s / n == Catch::Approx(1.0).margin(0.01));
  }

  SECTION("small shape 0.4 strictly positive with mean 0.4") {
    double s = 0.0;
    double min_draw = 1.0;
    for (int i = 0; i < n; ++i) {
      const double x = sample_gamma(0.4, 1.0, rng);
      REQUIRE(x > 0.0);
      min_draw = std::min(min_draw, x);
      s += x;
    }
    REQUIRE(s / n == Catch::Approx(0.4).margin(0.01));
    REQUIRE(min_draw > 0.0);
  }

  SECTION("log-mean at shape 0.05 matches digamma") {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::log(sample_gamma(0.05, 1.0, rng));
    REQUIRE(s / n == Catch::Approx(oracle::digamma(0.05)).margin(0.05));
  }

  SECTION("rejects nonpositive parameters") {
    REQUIRE_THROWS_AS(sample_gamma(0.0, 1.0, rng), ParameterError);
    REQUIRE_THROWS_AS(sample_gamma(1.0, -2.0, rng), ParameterError);
  }
}

TEST_CASE("inverse gamma sampler", "[distributions]") {
  Rng rng(202);
  const int n = 1000000;

  SECTION("mean rate/(shape-1) for shape 2") {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += sample_inverse_gamma(2.0, 3.0, rng);
    REQUIRE(s / n == Catch::Approx(3.0).margin(0.05));
  }

  SECTION("shape 1: finite positive draws, median b/ln2, divergent mean") {
    std::vector<double> draws(n);
    for (int i = 0; i < n; ++i) {
      draws[i] = sample_inverse_gamma(1.0, 0.33, rng);
      REQUIRE(std::isfinite(draws[i]));
      REQUIRE(draws[i] > 0.0);
    }
    const double mean_small =
        std::accumulate(draws.begin(), draws.begin() + 1000, 0.0) / 1000.0;
    const double mean_full = std::accumulate(draws.begin(), draws.end(), 0.0) / n;
    REQUIRE(mean_full > mean_small);  // no finite mean: running average grows

    std::nth_element(draws.begin(), draws.begin() + n / 2, draws.end());
    REQUIRE(draws[n / 2] == Catch::Approx(0.33 / std::log(2.0)).margin(0.02));
  }
}

TEST_CASE("dirichlet via gamma decomposition", "[distributions]") {
  Rng rng(303);

  SECTION("component means with alpha0=15, k=10") {
    const int n = 100000;
    Eigen::VectorXd alphas = Eigen::VectorXd::Constant(10, 15.0 / 10.0);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(10);
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd d = sample_dirichlet_via_gamma(alphas, rng);
      REQUIRE(std::abs(d.sum() - 1.0) < 1e-12);
      mean += d;
    }
    mean /= n;
    for (int h = 0; h < 10; ++h) REQUIRE(mean[h] == Catch::Approx(0.1).margin(0.005));
  }

  SECTION("length one is always the point mass") {
    Eigen::VectorXd alphas(1);
    alphas << 5.0;
    for (int i = 0; i < 100; ++i) {
      REQUIRE(sample_dirichlet_via_gamma(alphas, rng)[0] == 1.0);
    }
  }

  SECTION("marginal of Dir(2,3) is Beta(2,3) by KS") {
    const int n = 100000;
    Eigen::VectorXd alphas(2);
    alphas << 2.0, 3.0;
    std::vector<double> first(n);
    for (int i = 0; i < n; ++i) first[i] = sample_dirichlet_via_gamma(alphas, rng)[0];
    REQUIRE(oracle::ks_statistic(first, oracle::beta23_cdf) < 0.01);
  }

  SECTION("rejects nonpositive alpha") {
    Eigen::VectorXd alphas(2);
    alphas << 1.0, 0.0;
    REQUIRE_THROWS_AS(sample_dirichlet_via_gamma(alphas, rng), ParameterError);
  }
}

TEST_CASE("gig sampler point cases", "[distributions]") {
  Rng rng(404);
  const int n = 1000000;

  SECTION("b=0 reduces to Gamma(p, a/2)") {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += sample_gig({3.0, 2.0, 0.0}, rng);
    REQUIRE(s / n == Catch::Approx(3.0).margin(0.02));
  }

  SECTION("p=-1/2 is inverse Gaussian with mean sqrt(b/a)") {
    GigSampler sampler({-0.5, 2.0, 2.0});
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += sampler.draw(rng);
    REQUIRE(s / n == Catch::Approx(1.0).margin(0.01));
  }

  SECTION("negative index mean against quadrature") {
    GigSampler sampler({-1.5, 2.0, 3.0});
    oracle::GigQuadrature quad(-1.5, 2.0, 3.0);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += sampler.draw(rng);
    REQUIRE(s / n == Catch::Approx(quad.moment(1.0)).epsilon(0.01));
  }

  SECTION("invalid parameter combinations throw, never NaN") {
    REQUIRE_THROWS_AS(sample_gig({-1.0, 2.0, 0.0}, rng), ParameterError);  // b=0 needs p>0
    REQUIRE_THROWS_AS(sample_gig({1.0, 0.0, 1.0}, rng), ParameterError);
    REQUIRE_THROWS_AS(sample_gig({1.0, 2.0, -1.0}, rng), ParameterError);
  }
}

TEST_CASE("gig sampler moment grid", "[distributions][gig-grid]") {
  // Smoke version of the 27-point grid; the acceptance suite runs the full
  // 1% check with draw counts scaled to the per-cell Monte-Carlo error.
  Rng rng(505);
  const int n = 200000;
  for (double p : {-1.5, 0.5, 3.0}) {
    for (double a : {0.5, 2.0, 10.0}) {
      for (double b : {0.1, 1.0, 5.0}) {
        GigSampler sampler({p, a, b});
        oracle::GigQuadrature quad(p, a, b);
        double s1 = 0.0, s2 = 0.0;
        for (int i = 0; i < n; ++i) {
          const double x = sampler.draw(rng);
          s1 += x;
          s2 += x * x;
        }
        INFO("p=" << p << " a=" << a << " b=" << b);
        for (int r = 1; r <= 2; ++r) {
          const double target = quad.moment(r);
          const double rel_sd = std::sqrt(quad.moment(2.0 * r) - target * target) / target;
          const double tol = std::max(0.02, 4.0 * rel_sd / std::sqrt(static_cast<double>(n)));
          const double estimate = (r == 1 ? s1 : s2) / n;
          REQUIRE(estimate == Catch::Approx(target).epsilon(tol));
        }
      }
    }
  }
}

TEST_CASE("truncated normal sampler", "[distributions]") {
  Rng rng(606);
  const int n = 1000000;

  SECTION("half-normal mean") {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += sample_truncated_normal(0.0, 1.0, TruncSide::above_zero, rng);
    REQUIRE(s / n == Catch::Approx(std::sqrt(2.0 / M_PI)).margin(0.005));
  }

  SECTION("deep tail mean via Mills ratio") {
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = sample_truncated_normal(-8.0, 1.0, TruncSide::above_zero, rng);
      REQUIRE(x > 0.0);
      s += x;
    }
    REQUIRE(s / n == Catch::Approx(oracle::truncated_normal_mean_above0(-8.0, 1.0)).margin(0.005));
  }

  SECTION("below-zero support") {
    for (int i = 0; i < 10000; ++i) {
      REQUIRE(sample_truncated_normal(3.0, 1.0, TruncSide::below_zero, rng) <= 0.0);
    }
  }

  SECTION("tail safety to |mean|/sd = 40") {
    for (double m : {-40.0, -20.0, 20.0, 40.0}) {
      for (int i = 0; i < 1000; ++i) {
        const double above = sample_truncated_normal(m, 1.0, TruncSide::above_zero, rng);
        const double below = sample_truncated_normal(m, 1.0, TruncSide::below_zero, rng);
        REQUIRE(std::isfinite(above));
        REQUIRE(std::isfinite(below));
        REQUIRE(above > 0.0);
        REQUIRE(below <= 0.0);
      }
    }
  }
}

TEST_CASE("multivariate normal sampler", "[distributions]") {
  Rng rng(707);

  SECTION("identity covariance empirics") {
    const int n = 100000;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(3, 3);
    MvnSampler sampler(cov);
    Eigen::MatrixXd draws(n, 3);
    for (int i = 0; i < n; ++i) {
      draws.row(i) = sampler.draw(Eigen::VectorXd::Zero(3), rng).transpose();
    }
    Eigen::MatrixXd centered = draws.rowwise() - draws.colwise().mean();
    Eigen::MatrixXd emp = centered.transpose() * centered / n;
    REQUIRE((emp - cov).norm() < 0.02);
  }

  SECTION("2d mean and covariance within 1%") {
    const int n = 1000000;
    Eigen::VectorXd mu(2);
    mu << 1.0, 2.0;
    Eigen::MatrixXd cov(2, 2);
    cov << 2.0, 0.5, 0.5, 1.0;
    MvnSampler sampler(cov);
    Eigen::MatrixXd draws(n, 2);
    for (int i = 0; i < n; ++i) draws.row(i) = sampler.draw(mu, rng).transpose();
    Eigen::VectorXd mean = draws.colwise().mean();
    REQUIRE(mean[0] == Catch::Approx(1.0).margin(0.01));
    REQUIRE(mean[1] == Catch::Approx(2.0).margin(0.02));
    Eigen::MatrixXd centered = draws.rowwise() - mean.transpose();
    Eigen::MatrixXd emp = centered.transpose() * centered / n;
    REQUIRE(emp(0, 0) == Catch::Approx(2.0).epsilon(0.01));
    REQUIRE(emp(0, 1) == Catch::Approx(0.5).margin(0.005));
    REQUIRE(emp(1, 1) == Catch::Approx(1.0).epsilon(0.01));
  }

  SECTION("tiny negative eigenvalue is absorbed by jitter") {
    Eigen::MatrixXd q(2, 2);
    q << M_SQRT1_2, -M_SQRT1_2, M_SQRT1_2, M_SQRT1_2;
    Eigen::VectorXd eigs(2);
    eigs << 1.0, -1e-13;
    Eigen::MatrixXd cov = q * eigs.asDiagonal() * q.transpose();
    REQUIRE_NOTHROW(sample_mvn(Eigen::VectorXd::Zero(2), cov, rng));
  }

  SECTION("clearly indefinite matrix raises with min eigenvalue attached") {
    Eigen::MatrixXd cov(2, 2);
    cov << 1.0, 0.0, 0.0, -0.5;
    try {
      sample_mvn(Eigen::VectorXd::Zero(2), cov, rng);
      FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
      REQUIRE(e.min_eigenvalue() == Catch::Approx(-0.5).margin(1e-9));
    }
  }
}
