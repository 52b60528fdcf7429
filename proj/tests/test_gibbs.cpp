#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "hifm/gibbs.hpp"
#include "hifm/simulation.hpp"
#include "support/geweke.hpp"
#include "support/oracles.hpp"

using namespace hifm;

namespace {

Dataset make_dataset(const Eigen::MatrixXd& z, const std::vector<int>& binary_cols,
                     const Eigen::VectorXi& group) {
  std::vector<ColumnSpec> schema(z.cols());
  for (int j = 0; j < z.cols(); ++j) {
    schema[j].name = "v" + std::to_string(j);
    schema[j].role = j == 0 ? ColumnRole::outcome : ColumnRole::covariate;
    schema[j].type = ColumnType::continuous;
  }
  for (int j : binary_cols) schema[j].type = ColumnType::binary;
  return Dataset(z, schema, group);
}

}  // namespace

TEST_CASE("factor conditional algebra", "[gibbs]") {
  SECTION("zero loadings recover the prior") {
    GroupState g;
    g.lambda = Eigen::MatrixXd::Zero(4, 3);  // k = 2 plus intercept
    g.w = Eigen::VectorXd::Ones(2);
    g.sigma2 = Eigen::VectorXd::Constant(4, 2.0);
    const FactorConditional fc = factor_conditional(g);
    REQUIRE(fc.cov.isApprox(Eigen::MatrixXd::Identity(2, 2), 1e-14));
    REQUIRE(fc.projector.cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("scalar conjugate-normal case") {
    // k*=1, p=1, lambda=2, sigma2=1, z=3 -> posterior N(6/5, 1/5)
    GroupState g;
    g.lambda.resize(1, 2);
    g.lambda << 2.0, 0.0;
    g.w = Eigen::VectorXd::Ones(1);
    g.sigma2 = Eigen::VectorXd::Ones(1);
    const FactorConditional fc = factor_conditional(g);
    REQUIRE(fc.cov(0, 0) == Catch::Approx(0.2).margin(1e-12));
    Eigen::VectorXd z(1);
    z << 3.0;
    const Eigen::VectorXd mean = fc.projector * (z - fc.offset);
    REQUIRE(mean[0] == Catch::Approx(1.2).margin(1e-12));
  }

  SECTION("posterior-mean factors track the truth on synthetic data") {
    SimConfig config;
    config.p = 30;
    config.k = 5;
    config.n = 800;
    config.n_target = 300;
    auto [data, truth] = generate(config, {31, 0});
    GroupState g;
    g.lambda.resize(config.p, config.k + 1);
    g.lambda.leftCols(config.k) = truth.lambda[0];
    g.lambda.col(config.k).setZero();
    g.w = truth.w[0];
    g.sigma2 = truth.sigma2[0];
    const FactorConditional fc = factor_conditional(g);
    const auto& rows = data.rows_of_group(0);
    Eigen::MatrixXd mean_factors(rows.size(), config.k);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      mean_factors.row(i) =
          (fc.projector * (data.z().row(rows[i]).transpose() - fc.offset)).transpose();
    }
    for (int h = 0; h < config.k; ++h) {
      if (truth.w[0][h] <= 0.05) continue;  // shrunk columns carry no signal
      const auto est = mean_factors.col(h);
      const auto tru = truth.factors[0].col(h);
      const double c = (est.array() - est.mean()).matrix().dot(
                           (tru.array() - tru.mean()).matrix()) /
                       std::sqrt((est.array() - est.mean()).square().sum() *
                                 (tru.array() - tru.mean()).square().sum());
      REQUIRE(std::abs(c) > 0.9);
    }
  }
}

TEST_CASE("loadings row conditional", "[gibbs]") {
  SECTION("uninformative factors revert to the prior") {
    const int n = 12, k = 2;
    Eigen::MatrixXd faug = Eigen::MatrixXd::Zero(n, k + 1);
    faug.col(k).setOnes();
    const Eigen::VectorXd z = Eigen::VectorXd::Constant(n, 0.7);
    Eigen::VectorXd prior_precision(k + 1);
    prior_precision << 4.0, 0.25, 1.0;  // phi/w then the intercept
    const LoadingsConditional lc =
        loadings_conditional(faug.transpose() * faug, faug.transpose() * z, 1.0, prior_precision);
    REQUIRE(lc.mean[0] == 0.0);
    REQUIRE(lc.mean[1] == 0.0);
    REQUIRE(lc.cov(0, 0) == Catch::Approx(0.25).margin(1e-12));
    REQUIRE(lc.cov(1, 1) == Catch::Approx(4.0).margin(1e-12));
  }

  SECTION("scalar case matches the ridge formula") {
    Rng rng(44);
    const int n = 20;
    Eigen::MatrixXd f(n, 1);
    Eigen::VectorXd z(n);
    for (int i = 0; i < n; ++i) {
      f(i, 0) = rng.normal();
      z[i] = 0.5 * f(i, 0) + 0.1 * rng.normal();
    }
    const double phi = 2.0, w = 0.5, sigma2 = 0.3;
    Eigen::VectorXd prior_precision(1);
    prior_precision << phi / w;
    const LoadingsConditional lc =
        loadings_conditional(f.transpose() * f, f.transpose() * z, sigma2, prior_precision);
    const double expected =
        1.0 / (phi / w + f.col(0).squaredNorm() / sigma2) * (f.col(0).dot(z) / sigma2);
    REQUIRE(lc.mean[0] == Catch::Approx(expected).margin(1e-12));
  }
}

TEST_CASE("sigma2 conditional", "[gibbs]") {
  SECTION("zero residuals with v=3, n=10") {
    const GammaPosterior post = sigma2_conditional(1.5, 1.5, 10, 0.0);
    REQUIRE(post.shape == Catch::Approx(6.5));
    REQUIRE(post.rate == Catch::Approx(1.5));
  }

  SECTION("binary columns stay pinned through the block update") {
    Rng rng(55);
    Eigen::MatrixXd z(30, 3);
    for (int i = 0; i < 30; ++i) {
      z(i, 0) = rng.uniform() < 0.5 ? 0.0 : 1.0;
      z(i, 1) = rng.uniform() < 0.5 ? 0.0 : 1.0;
      z(i, 2) = rng.normal();
    }
    Eigen::VectorXi g = Eigen::VectorXi::Ones(30);
    Dataset data = make_dataset(z, {0, 1}, g);
    Hyperparameters hyper;
    hyper.k_star = 2;
    GibbsSampler sampler(data, hyper, {56, 0});
    ChainState state = sampler.init();
    sampler.update_sigma2(state, 0);
    REQUIRE(state.groups[0].sigma2[0] == 1.0);
    REQUIRE(state.groups[0].sigma2[1] == 1.0);
    REQUIRE(state.groups[0].sigma2[2] != 1.0);
  }

  SECTION("posterior concentrates at the generative variance") {
    Rng rng(57);
    const long n = 20000;
    double rss = 0.0;
    for (long i = 0; i < n; ++i) {
      const double e = 2.0 * rng.normal();  // sigma2 = 4
      rss += e * e;
    }
    const GammaPosterior post = sigma2_conditional(1.5, 1.5, n, rss);
    const double posterior_mean_sigma2 = post.rate / (post.shape - 1.0);
    REQUIRE(posterior_mean_sigma2 == Catch::Approx(4.0).epsilon(0.05));
  }
}

TEST_CASE("phi conditional", "[gibbs]") {
  SECTION("all loadings zero, tau=3, L=2") {
    const GammaPosterior post = phi_conditional(3.0, 2, 0.0);
    REQUIRE(post.shape == Catch::Approx(2.5));
    REQUIRE(post.rate == Catch::Approx(1.5));
    REQUIRE(post.shape / post.rate == Catch::Approx(5.0 / 3.0));
  }
  SECTION("single population with lambda^2/w = 3") {
    const GammaPosterior post = phi_conditional(3.0, 1, 3.0);
    REQUIRE(post.shape == Catch::Approx(2.0));
    REQUIRE(post.rate == Catch::Approx(3.0));
  }
  SECTION("draws stay positive and finite over repeated updates") {
    Rng rng(58);
    for (int sweep = 0; sweep < 10000; ++sweep) {
      const double lam2_over_w = sample_gamma(1.0, 1.0, rng);
      const GammaPosterior post = phi_conditional(3.0, 2, 2.0 * lam2_over_w);
      const double draw = sample_gamma(post.shape, post.rate, rng);
      REQUIRE(draw > 0.0);
      REQUIRE(std::isfinite(draw));
    }
  }
}

TEST_CASE("weight conditional", "[gibbs]") {
  SECTION("index from the application-scale substitution") {
    const GigParams q = weight_conditional(15.0, 0.1, 50, 2.3);
    REQUIRE(q.p == Catch::Approx(-23.5));
    REQUIRE(q.a == 2.0);
    REQUIRE(q.b == Catch::Approx(2.3));
  }

  SECTION("zero column with positive index reduces to a Gamma draw") {
    const GigParams q = weight_conditional(15.0, 0.9, 4, 0.0);
    REQUIRE(q.p == Catch::Approx(15.0 * 0.9 - 2.0));
    REQUIRE(q.b == 0.0);
    Rng rng(59);
    const int n = 200000;
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += sample_gig(q, rng);
    REQUIRE(s / n == Catch::Approx(q.p / 1.0).epsilon(0.02));  // Gamma(p, a/2=1)
  }

  SECTION("floor prevents the improper corner") {
    const GigParams q = weight_conditional(15.0, 0.01, 50, 0.0);
    REQUIRE(q.p < 0.0);
    REQUIRE(q.b == 1e-12);
    Rng rng(60);
    const double draw = sample_gig(q, rng);
    REQUIRE(draw > 0.0);
    REQUIRE(std::isfinite(draw));
  }

  SECTION("iterated update matches the GIG law (stationarity)") {
    const GigParams q = weight_conditional(15.0, 0.2, 10, 1.7);
    Rng rng(61);
    const int n = 10000;
    std::vector<double> draws(n);
    GigSampler sampler(q);
    for (int i = 0; i < n; ++i) draws[i] = sampler.draw(rng);
    oracle::GigQuadrature quad(q.p, q.a, q.b);
    REQUIRE(oracle::ks_statistic(draws, [&](double x) { return quad.cdf(x); }) < 0.02);
  }
}

TEST_CASE("pi0 log posterior", "[gibbs]") {
  SECTION("no populations reduces to the Dirichlet term") {
    Eigen::VectorXd pi(2), pi2(2);
    pi << 0.3, 0.7;
    pi2 << 0.6, 0.4;
    const double alpha0 = 3.0;
    const double diff = pi0_log_posterior(pi, {}, alpha0, {}) -
                        pi0_log_posterior(pi2, {}, alpha0, {});
    const double expected = (alpha0 / 2.0 - 1.0) * (std::log(pi[0]) + std::log(pi[1]) -
                                                    std::log(pi2[0]) - std::log(pi2[1]));
    REQUIRE(diff == Catch::Approx(expected).margin(1e-12));
  }

  SECTION("hand case: k=2, alpha0=2, alpha_l=1, w=(1,1)") {
    // value reduces to -lgamma(pi1) - lgamma(pi2) + const
    Eigen::VectorXd w(2);
    w << 1.0, 1.0;
    auto value = [&](const Eigen::VectorXd& pi) {
      return pi0_log_posterior(pi, {w}, 2.0, {1.0});
    };
    Eigen::VectorXd pa(2), pb(2);
    pa << 0.25, 0.75;
    pb << 0.5, 0.5;
    const double expected = -std::lgamma(0.25) - std::lgamma(0.75) +
                            std::lgamma(0.5) + std::lgamma(0.5);
    REQUIRE(value(pa) - value(pb) == Catch::Approx(expected).margin(1e-12));
  }

  SECTION("nonpositive coordinates are rejected outright") {
    Eigen::VectorXd pi(2);
    pi << 0.0, 1.0;
    REQUIRE(pi0_log_posterior(pi, {}, 2.0, {}) == -std::numeric_limits<double>::infinity());
  }
}

TEST_CASE("pi0 metropolis step", "[gibbs]") {
  SECTION("identical proposal is always accepted") {
    Eigen::VectorXd theta(3), pi(3);
    theta << 0.9, 1.2, 0.9;
    pi = theta / theta.sum();
    Eigen::VectorXd w(3);
    w << 0.5, 2.0, 1.0;
    for (const Pi0Anchor anchor : {Pi0Anchor::persist_theta, Pi0Anchor::renormalize}) {
      const double ratio =
          pi0_mh_log_ratio(theta, pi, theta, pi, {w}, 2.0, {1.5}, 50.0, anchor);
      REQUIRE(ratio == Catch::Approx(0.0).margin(1e-12));
    }
  }

  SECTION("stationary distribution matches an independence-sampler gold run") {
    // k*=3 toy with fixed weights; compare first moments of pi0.
    const double alpha0 = 4.0;
    const std::vector<double> alphas = {3.0, 2.0};
    Eigen::VectorXd w1(3), w2(3);
    w1 << 2.0, 0.3, 0.8;
    w2 << 1.1, 0.5, 0.2;
    const std::vector<Eigen::VectorXd> w_groups = {w1, w2};

    // Gold run: independence proposals from Dir(1,1,1), hand-coded target.
    auto target = [&](const Eigen::VectorXd& pi) {
      double lp = 0.0;
      for (int h = 0; h < 3; ++h) lp += (alpha0 / 3.0 - 1.0) * std::log(pi[h]);
      for (std::size_t l = 0; l < w_groups.size(); ++l) {
        for (int h = 0; h < 3; ++h) {
          lp += alphas[l] * pi[h] * std::log(w_groups[l][h]) -
                std::lgamma(alphas[l] * pi[h]);
        }
      }
      return lp;
    };
    Rng gold_rng(62);
    Eigen::VectorXd gold_pi = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
    Eigen::VectorXd gold_mean = Eigen::VectorXd::Zero(3);
    const int gold_iters = 400000;
    for (int t = 0; t < gold_iters; ++t) {
      Eigen::VectorXd prop =
          sample_dirichlet_via_gamma(Eigen::VectorXd::Ones(3), gold_rng);
      if (std::log(gold_rng.uniform()) < target(prop) - target(gold_pi)) gold_pi = prop;
      gold_mean += gold_pi;
    }
    gold_mean /= gold_iters;

    // The model's MH kernel on a state with the same fixed weights.
    Eigen::MatrixXd z(6, 3);
    Rng data_rng(63);
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 3; ++j) z(i, j) = data_rng.normal();
    }
    Eigen::VectorXi g(6);
    g << 1, 1, 1, 2, 2, 2;
    // Note: the persist_theta variant fails this check (first-moment bias of
    // roughly 0.04 at these settings) because the raw-theta walk has no proper
    // invariant distribution along the radial direction. The renormalized
    // anchor is the default for that reason.
    Dataset data = make_dataset(z, {}, g);
    Hyperparameters hyper;
    hyper.k_star = 3;
    hyper.alpha0 = alpha0;
    hyper.alpha_l = alphas;
    hyper.mh_tuning_c = 25.0;
    hyper.pi0_anchor = Pi0Anchor::renormalize;
    GibbsSampler sampler(data, hyper, {64, 0});
    ChainState state = sampler.init();
    state.groups[0].w = w1;
    state.groups[1].w = w2;
    Eigen::VectorXd mh_mean = Eigen::VectorXd::Zero(3);
    const int iters = 200000;
    for (int t = 0; t < iters; ++t) {
      sampler.update_pi0(state, t);
      mh_mean += state.shared.pi0;
    }
    mh_mean /= iters;
    for (int h = 0; h < 3; ++h) {
      REQUIRE(mh_mean[h] == Catch::Approx(gold_mean[h]).margin(0.02));
    }
  }
}

TEST_CASE("probit latent update", "[gibbs]") {
  Rng setup(65);
  Eigen::MatrixXd z(200, 2);
  for (int i = 0; i < 200; ++i) {
    z(i, 0) = i % 2 == 0 ? 1.0 : 0.0;
    z(i, 1) = setup.normal();
  }
  Eigen::VectorXi g = Eigen::VectorXi::Ones(200);
  Dataset data = make_dataset(z, {0}, g);
  Hyperparameters hyper;
  hyper.k_star = 2;
  GibbsSampler sampler(data, hyper, {66, 0});
  ChainState state = sampler.init();
  // Freeze loadings at zero so the conditional mean is the intercept alone.
  for (auto& grp : state.groups) grp.lambda.setZero();

  SECTION("observed zero at mean zero has the half-normal mean") {
    double s = 0.0;
    long count = 0;
    for (int iter = 0; iter < 2000; ++iter) {
      sampler.update_probit_latents(state, iter);
      for (int i = 0; i < 200; ++i) {
        if (z(i, 0) == 0.0) {
          s += state.z_latent(i, 0);
          ++count;
        }
      }
    }
    REQUIRE(s / count == Catch::Approx(-std::sqrt(2.0 / M_PI)).margin(0.01));
  }

  SECTION("deep negative mean still yields positive draws for observed ones") {
    for (auto& grp : state.groups) grp.lambda.col(2).setConstant(-8.0);
    double s = 0.0;
    long count = 0;
    for (int iter = 0; iter < 5000; ++iter) {
      sampler.update_probit_latents(state, iter);
      for (int i = 0; i < 200; ++i) {
        if (z(i, 0) == 1.0) {
          REQUIRE(state.z_latent(i, 0) > 0.0);
          s += state.z_latent(i, 0);
          ++count;
        }
      }
    }
    REQUIRE(s / count ==
            Catch::Approx(oracle::truncated_normal_mean_above0(-8.0, 1.0)).margin(0.005));
  }

  SECTION("continuous cells are untouched") {
    const Eigen::VectorXd before = state.z_latent.col(1);
    sampler.update_probit_latents(state, 1);
    REQUIRE(state.z_latent.col(1) == before);
  }
}

TEST_CASE("run_chain schedules and invariants", "[gibbs]") {
  Rng setup(67);
  Eigen::MatrixXd z(40, 4);
  for (int i = 0; i < 40; ++i) {
    z(i, 0) = setup.uniform() < 0.4 ? 1.0 : 0.0;
    for (int j = 1; j < 4; ++j) z(i, j) = setup.normal();
  }
  Eigen::VectorXi g(40);
  for (int i = 0; i < 40; ++i) g[i] = i < 15 ? 1 : 2;
  Dataset data = make_dataset(z, {0}, g);

  SECTION("retained draw counts") {
    Hyperparameters hyper;
    hyper.k_star = 2;
    hyper.n_iter = 10, hyper.n_burnin = 0, hyper.thin = 1;
    REQUIRE(run_chain(data, hyper, {68, 0}).draws.size() == 10);
    hyper.n_iter = 40, hyper.n_burnin = 20, hyper.thin = 5;
    REQUIRE(run_chain(data, hyper, {68, 0}).draws.size() == 4);
  }

  SECTION("structural invariants hold after every sweep") {
    Hyperparameters hyper;
    hyper.k_star = 3;
    hyper.n_iter = 60, hyper.n_burnin = 0, hyper.thin = 1;
    const PosteriorChain chain = run_chain(data, hyper, {69, 0});
    REQUIRE(chain.mh.sign_violations == 0);
    REQUIRE(chain.mh.checked_binary_cells == 60L * 40L);
    for (const auto& draw : chain.draws) {
      REQUIRE(std::abs(draw.shared.pi0.sum() - 1.0) < 1e-10);
      REQUIRE((draw.shared.pi0.array() > 0.0).all());
      REQUIRE((draw.shared.phi.array() > 0.0).all());
      for (const auto& grp : draw.groups) {
        REQUIRE((grp.w.array() > 0.0).all());
        REQUIRE((grp.sigma2.array() > 0.0).all());
      }
    }
  }

  SECTION("determinism: serial and parallel runs are bit-identical") {
    Hyperparameters hyper;
    hyper.k_star = 3;
    hyper.n_iter = 30, hyper.n_burnin = 10, hyper.thin = 2;
    GibbsSampler serial(data, hyper, {70, 0}, 1);
    GibbsSampler parallel(data, hyper, {70, 0}, 4);
    const PosteriorChain a = serial.run();
    const PosteriorChain b = parallel.run();
    REQUIRE(a.draws.size() == b.draws.size());
    for (std::size_t d = 0; d < a.draws.size(); ++d) {
      REQUIRE(a.draws[d].shared.pi0 == b.draws[d].shared.pi0);
      REQUIRE(a.draws[d].z_latent == b.draws[d].z_latent);
      for (std::size_t l = 0; l < a.draws[d].groups.size(); ++l) {
        REQUIRE(a.draws[d].groups[l].lambda == b.draws[d].groups[l].lambda);
        REQUIRE(a.draws[d].groups[l].factors == b.draws[d].groups[l].factors);
        REQUIRE(a.draws[d].groups[l].w == b.draws[d].groups[l].w);
        REQUIRE(a.draws[d].groups[l].sigma2 == b.draws[d].groups[l].sigma2);
      }
    }
  }
}

TEST_CASE("joint-distribution check (reduced)", "[gibbs][geweke]") {
  // Smaller sibling of the acceptance criterion: 6000 sweeps, |z| < 5.
  const geweke::Toy toy;
  const geweke::Report report = geweke::run(toy, 6000, 150, 40, 71, Pi0Anchor::renormalize);
  INFO("mh acceptance " << report.mh_acceptance);
  for (int i = 0; i < geweke::Functionals::count; ++i) {
    INFO(geweke::Functionals::name(i) << ": mc=" << report.mc_mean[i]
                                      << " sc=" << report.sc_mean[i]
                                      << " z=" << report.z_scores[i]);
    REQUIRE(std::abs(report.z_scores[i]) < 5.0);
  }
}
