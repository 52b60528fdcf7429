#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "hifm/data.hpp"
#include "hifm/model.hpp"
#include "support/oracles.hpp"

using namespace hifm;

namespace {

Dataset tiny_dataset(int n, int p, int n_binary, int groups = 1, std::uint64_t seed = 9) {
  Rng rng(seed);
  Eigen::MatrixXd z(n, p);
  std::vector<ColumnSpec> schema(p);
  for (int j = 0; j < p; ++j) {
    schema[j].name = "c" + std::to_string(j);
    schema[j].role = j == 0 ? ColumnRole::outcome : ColumnRole::covariate;
    schema[j].type = j < n_binary ? ColumnType::binary : ColumnType::continuous;
    for (int i = 0; i < n; ++i) {
      z(i, j) = j < n_binary ? (rng.uniform() < 0.5 ? 0.0 : 1.0) : rng.normal();
    }
  }
  Eigen::VectorXi group(n);
  for (int i = 0; i < n; ++i) group[i] = 1 + i % groups;
  return Dataset(std::move(z), std::move(schema), std::move(group));
}

}  // namespace

TEST_CASE("default truncation rule", "[model_core]") {
  REQUIRE(default_k_star(50) == 20);
  REQUIRE(default_k_star(100) == 23);
  REQUIRE(default_k_star(2) == 3);
  REQUIRE_THROWS_AS(default_k_star(1), ParameterError);
}

TEST_CASE("dataset validation", "[model_core]") {
  SECTION("rejects non-binary values in binary columns") {
    Eigen::MatrixXd z(2, 2);
    z << 0.0, 1.0, 2.0, 0.5;
    std::vector<ColumnSpec> schema{{"y", ColumnType::binary, ColumnRole::outcome},
                                   {"x", ColumnType::continuous, ColumnRole::covariate}};
    Eigen::VectorXi g(2);
    g << 1, 1;
    REQUIRE_THROWS_AS(Dataset(z, schema, g), ValidationError);
  }

  SECTION("rejects empty populations") {
    Eigen::MatrixXd z = Eigen::MatrixXd::Zero(3, 2);
    std::vector<ColumnSpec> schema{{"y", ColumnType::continuous, ColumnRole::outcome},
                                   {"x", ColumnType::continuous, ColumnRole::covariate}};
    Eigen::VectorXi g(3);
    g << 1, 1, 3;  // population 2 missing
    REQUIRE_THROWS_AS(Dataset(z, schema, g), ValidationError);
  }

  SECTION("rejects outcomes after covariates") {
    Eigen::MatrixXd z = Eigen::MatrixXd::Zero(2, 2);
    std::vector<ColumnSpec> schema{{"x", ColumnType::continuous, ColumnRole::covariate},
                                   {"y", ColumnType::continuous, ColumnRole::outcome}};
    Eigen::VectorXi g(2);
    g << 1, 1;
    REQUIRE_THROWS_AS(Dataset(z, schema, g), ValidationError);
  }

  SECTION("standardization centers and scales continuous columns only") {
    Dataset d = tiny_dataset(200, 3, 1);
    d.standardize();
    REQUIRE(std::abs(d.z().col(1).mean()) < 1e-12);
    REQUIRE(d.z().col(1).squaredNorm() / 200 == Catch::Approx(1.0).margin(1e-12));
    for (int i = 0; i < 200; ++i) {
      const double v = d.z()(i, 0);
      REQUIRE((v == 0.0 || v == 1.0));
    }
  }
}

TEST_CASE("hyperparameter validation", "[model_core]") {
  Hyperparameters hyper;
  REQUIRE_NOTHROW(hyper.validate(2));
  SECTION("burnin bound") {
    hyper.n_burnin = hyper.n_iter;
    REQUIRE_THROWS_AS(hyper.validate(2), ParameterError);
  }
  SECTION("alpha_l broadcast or exact length") {
    hyper.alpha_l = {1.0, 2.0, 3.0};
    REQUIRE_THROWS_AS(hyper.validate(2), ParameterError);
    hyper.alpha_l = {1.0, 2.0};
    REQUIRE_NOTHROW(hyper.validate(2));
  }
  SECTION("retained draw counts") {
    Hyperparameters h;
    h.n_iter = 2000, h.n_burnin = 1000, h.thin = 5;
    REQUIRE(h.n_retained() == 200);
    h.n_iter = 3000, h.n_burnin = 1500, h.thin = 6;
    REQUIRE(h.n_retained() == 250);
  }
}

TEST_CASE("init_from_prior structure", "[model_core]") {
  SECTION("all-binary dataset pins every sigma2 to 1") {
    Dataset d = tiny_dataset(30, 4, 4, 2);
    Hyperparameters hyper;
    hyper.k_star = 5;
    const ChainState state = init_from_prior(hyper, d, {11, 0});
    for (const auto& g : state.groups) {
      REQUIRE((g.sigma2.array() == 1.0).all());
    }
  }

  SECTION("k_star=1 single population gives pi0=(1)") {
    Dataset d = tiny_dataset(10, 3, 0);
    Hyperparameters hyper;
    hyper.k_star = 1;
    const ChainState state = init_from_prior(hyper, d, {12, 0});
    REQUIRE(state.shared.pi0.size() == 1);
    REQUIRE(state.shared.pi0[0] == 1.0);
  }

  SECTION("probit sign consistency at initialization") {
    Dataset d = tiny_dataset(50, 4, 2, 2);
    Hyperparameters hyper;
    hyper.k_star = 3;
    const ChainState state = init_from_prior(hyper, d, {13, 0});
    for (int i = 0; i < d.n(); ++i) {
      for (int j = 0; j < 2; ++j) {
        if (d.z()(i, j) > 0.5) {
          REQUIRE(state.z_latent(i, j) > 0.0);
        } else {
          REQUIRE(state.z_latent(i, j) <= 0.0);
        }
      }
    }
    // continuous cells copied
    REQUIRE(state.z_latent.col(2) == d.z().col(2));
  }

  SECTION("determinism under a fixed handle") {
    Dataset d = tiny_dataset(20, 4, 1, 2);
    Hyperparameters hyper;
    hyper.k_star = 4;
    const ChainState a = init_from_prior(hyper, d, {77, 3});
    const ChainState b = init_from_prior(hyper, d, {77, 3});
    REQUIRE(a.shared.pi0 == b.shared.pi0);
    REQUIRE(a.groups[0].lambda == b.groups[0].lambda);
    REQUIRE(a.z_latent == b.z_latent);
  }
}

TEST_CASE("prior loadings-row second moment", "[model_core][prior-moment]") {
  // Monte-Carlo mean of sum_h lambda_jh^2 under the truncated prior equals
  // tau/(tau-2) * alpha_l; unit-level run with a loose band, the acceptance
  // suite runs the full-size version.
  const int k = 20;
  const double tau = 3.0, alpha = 15.0;
  const int reps = 20000;
  Rng rng(515);
  double total = 0.0;
  for (int r = 0; r < reps; ++r) {
    const Eigen::VectorXd pi0 =
        sample_dirichlet_via_gamma(Eigen::VectorXd::Constant(k, alpha / k), rng);
    double row_sum = 0.0;
    for (int h = 0; h < k; ++h) {
      const double w = sample_gamma(alpha * pi0[h], 1.0, rng);
      const double phi = sample_gamma(tau / 2.0, tau / 2.0, rng);
      const double lam = rng.normal() * std::sqrt(w / phi);
      row_sum += lam * lam;
    }
    total += row_sum;
  }
  REQUIRE(total / reps == Catch::Approx(tau / (tau - 2.0) * alpha).epsilon(0.15));
}

TEST_CASE("assemble_covariance", "[model_core]") {
  SECTION("zero loadings give the diagonal") {
    GroupState g;
    g.lambda = Eigen::MatrixXd::Zero(3, 4);
    g.w = Eigen::VectorXd::Ones(3);
    g.sigma2 = Eigen::VectorXd::Constant(3, 2.5);
    const Eigen::MatrixXd omega = assemble_covariance(g);
    REQUIRE(omega.isApprox(Eigen::MatrixXd(Eigen::VectorXd::Constant(3, 2.5).asDiagonal())));
  }

  SECTION("rank-1 weighted expansion identity") {
    Rng rng(21);
    const int p = 5, k = 3;
    Eigen::MatrixXd lambda0(p, k);
    for (int j = 0; j < p; ++j) {
      for (int h = 0; h < k; ++h) lambda0(j, h) = rng.normal();
    }
    Eigen::VectorXd w(k);
    w << 0.3, 1.7, 0.02;
    GroupState g;
    g.lambda.resize(p, k + 1);
    g.lambda.leftCols(k) = lambda0 * w.cwiseSqrt().asDiagonal();
    g.lambda.col(k).setConstant(9.0);  // intercept ignored by the product
    g.w = w;
    g.sigma2 = Eigen::VectorXd::Constant(p, 0.5);
    Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(p, p);
    for (int h = 0; h < k; ++h) {
      expected += w[h] * lambda0.col(h) * lambda0.col(h).transpose();
    }
    expected.diagonal() += g.sigma2;
    REQUIRE((assemble_covariance(g) - expected).cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("matches the naive triple loop and is exactly symmetric") {
    Rng rng(22);
    GroupState g;
    g.lambda.resize(4, 4);  // 3 factors + intercept
    for (int j = 0; j < 4; ++j) {
      for (int h = 0; h < 4; ++h) g.lambda(j, h) = rng.normal();
    }
    g.w = Eigen::VectorXd::Ones(3);
    g.sigma2 = Eigen::VectorXd::Ones(4);
    const Eigen::MatrixXd omega = assemble_covariance(g);
    const Eigen::MatrixXd naive = oracle::naive_covariance(g.lambda.leftCols(3), g.sigma2);
    REQUIRE((omega - naive).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE(omega == Eigen::MatrixXd(omega.transpose()));
  }
}

TEST_CASE("prior moment is stable in the truncation level", "[model_core][prior-moment]") {
  // E[max_j sum_h lambda_jh^2] at k*=40 within 10% of k*=20 (tau=3, alpha=15).
  const double tau = 3.0, alpha = 15.0;
  const int p = 10, reps = 60000;
  auto run = [&](int k, std::uint64_t seed) {
    Rng rng(seed);
    double total = 0.0;
    for (int r = 0; r < reps; ++r) {
      const Eigen::VectorXd pi0 =
          sample_dirichlet_via_gamma(Eigen::VectorXd::Constant(k, alpha / k), rng);
      Eigen::VectorXd w(k), phi_row(p);
      for (int h = 0; h < k; ++h) w[h] = sample_gamma(alpha * pi0[h], 1.0, rng);
      double max_row = 0.0;
      for (int j = 0; j < p; ++j) {
        double row = 0.0;
        for (int h = 0; h < k; ++h) {
          const double phi = sample_gamma(tau / 2.0, tau / 2.0, rng);
          const double lam = rng.normal() * std::sqrt(w[h] / phi);
          row += lam * lam;
        }
        max_row = std::max(max_row, row);
      }
      total += max_row;
    }
    return total / reps;
  };
  const double at20 = run(20, 616);
  const double at40 = run(40, 617);
  REQUIRE(std::abs(at40 - at20) / at20 < 0.10);
}
