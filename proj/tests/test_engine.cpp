#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "rfslam/engine.hpp"
#include "support/oracles.hpp"

using namespace rfslam;
using Catch::Approx;

namespace {

SignalSpec spec_of(int m_count) {
  return SignalSpec::make(6.0e9, (m_count - 1) * 1.0e7, 1.0e7);
}

AgentBelief uniform_agent(std::size_t count, const Vec2& center) {
  AgentBelief agent;
  agent.particles.assign(count, AgentState{center, Vec2(0, 0)});
  agent.weights.assign(count, 1.0 / static_cast<double>(count));
  return agent;
}

FeatureBelief feature_at(std::size_t count, const Vec2& position, double intensity,
                         double mass, bool is_pa = true) {
  FeatureBelief f;
  f.is_pa = is_pa;
  f.particles.assign(count, FeatureParticle{position, intensity});
  f.weights.assign(count, mass / static_cast<double>(count));
  return f;
}

NoiseBelief fixed_noise(std::size_t count, double eta) {
  NoiseBelief noise;
  noise.particles.assign(count, eta);
  noise.weights.assign(count, 1.0 / static_cast<double>(count));
  return noise;
}

double frobenius_rel(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
  const double scale = std::max(1e-300, b.norm());
  return (a - b).norm() / scale;
}

}  // namespace

TEST_CASE("predict_step keeps masses and weights") {
  const std::size_t count = 50;
  ModelConfig cfg;
  cfg.agent_accel_var = 0.0;
  cfg.pa_walk_var = 0.0;
  cfg.va_walk_var = 0.0;
  cfg.intensity_walk_var = 0.0;

  Beliefs b;
  b.agent = uniform_agent(count, Vec2(1, 1));
  b.features = {{feature_at(count, Vec2(5, 0), 1.0, 1.0)}};
  b.noise = {fixed_noise(20, 5e-5)};
  b.noise_var_estimate = {5e-5};

  SECTION("unit survival, zero driving noise") {
    cfg.survival_prob = 1.0;
    const Beliefs before = b;
    predict_step(b, cfg, StreamKey(3));
    CHECK(b.agent.weights == before.agent.weights);
    for (std::size_t p = 0; p < count; ++p) {
      CHECK((b.agent.particles[p].position - before.agent.particles[p].position).norm() == 0.0);
      CHECK((b.features[0][0].particles[p].position -
             before.features[0][0].particles[p].position)
                .norm() == 0.0);
    }
    CHECK(b.features[0][0].existence() == Approx(1.0).margin(1e-12));
    CHECK(b.noise[0].weights == before.noise[0].weights);
  }

  SECTION("survival probability scales the existence mass") {
    cfg.survival_prob = 0.999;
    predict_step(b, cfg, StreamKey(3));
    CHECK(b.features[0][0].existence() == Approx(0.999).margin(1e-12));
  }
}

TEST_CASE("propose_new_pfs detection rules") {
  const SignalSpec spec = spec_of(31);
  ModelConfig cfg;
  const std::size_t count = 64;
  const Vec2 agent_pos(0, 0);
  const Vec2 pa_pos(3.0, 0);  // anchor distance ~ bin 10.3
  const AgentBelief agent = uniform_agent(count, agent_pos);
  const FeatureBelief pa = feature_at(count, pa_pos, 1.0, 1.0);
  const double eta = 6.3e-5;

  SECTION("no signal, no proposals") {
    const auto born = propose_new_pfs(Eigen::VectorXcd::Zero(spec.sample_count), agent, pa,
                                      eta, spec, cfg, StreamKey(1));
    CHECK(born.empty());
  }

  SECTION("one strong path away from the anchor delay") {
    const int bin = 20;
    const Eigen::VectorXcd z = std::complex<double>(0.5, 0.1) *
                               contribution_vector(bin * spec.tau_step, spec);
    const auto born = propose_new_pfs(z, agent, pa, eta, spec, cfg, StreamKey(1));
    REQUIRE(born.size() == 1);
    CHECK(born[0].existence() == Approx(cfg.birth_prob).margin(1e-15));
    CHECK(born[0].particles.size() == count);
    for (const FeatureParticle& phi : born[0].particles) {
      CHECK(birth_cell_contains(bin + 1, agent_pos, phi.position, spec));
    }
  }

  SECTION("a path inside the anchor delay band is suppressed") {
    // Same delay bin as the anchor distance (3.0 m -> bin 10 at 0.29 m/bin).
    const int bin = static_cast<int>(std::round(3.0 / (spec.tau_step * kSpeedOfLight)));
    const Eigen::VectorXcd z =
        std::complex<double>(0.5, 0.0) * contribution_vector(bin * spec.tau_step, spec);
    AgentBelief spread_agent = agent;
    // Smear the agent cloud so the anchor-distance band covers the bin.
    Rng rng(5);
    for (AgentState& x : spread_agent.particles) {
      x.position += Vec2(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
    }
    const auto born = propose_new_pfs(z, spread_agent, pa, eta, spec, cfg, StreamKey(1));
    CHECK(born.empty());
  }
}

TEST_CASE("compute_cov_terms basic contracts") {
  const SignalSpec spec = spec_of(5);

  SECTION("zero existence mass zeroes the marginal covariance") {
    const AgentBelief agent = uniform_agent(4, Vec2(0, 0));
    FeatureBelief f = feature_at(4, Vec2(2, 0), 1.0, 1.0);
    f.weights.assign(4, 0.0);
    const CovTerms cov = compute_cov_terms(agent, {f}, fixed_noise(4, 1e-4), spec);
    CHECK(cov.features[0].existence_mass == 0.0);
    CHECK(cov.features[0].marginal_cov.norm() == 0.0);
  }

  SECTION("single particle reproduces the closed form") {
    const AgentBelief agent = uniform_agent(1, Vec2(0, 0));
    const double mass = 0.37;
    const double intensity = 1.43;
    const FeatureBelief f = feature_at(1, Vec2(4, 1), intensity, mass);
    const CovTerms cov = compute_cov_terms(agent, {f}, fixed_noise(2, 1e-4), spec);
    const double delay = Vec2(4, 1).norm() / kSpeedOfLight;
    const Eigen::VectorXcd h = contribution_vector(delay, spec);
    const Eigen::MatrixXcd expected = mass * intensity * h * h.adjoint();
    CHECK(frobenius_rel(cov.features[0].marginal_cov, expected) < 1e-14);
  }

  SECTION("random snapshot matches the naive double loop") {
    Rng rng(17);
    const AgentBelief agent = oracles::random_agent(20, rng);
    std::vector<FeatureBelief> features{oracles::random_feature(20, 0.9, rng),
                                        oracles::random_feature(20, 0.9, rng)};
    const NoiseBelief noise = oracles::random_noise(10, rng);
    const CovTerms cov = compute_cov_terms(agent, features, noise, spec);
    for (std::size_t n = 0; n < features.size(); ++n) {
      const Eigen::MatrixXcd naive = oracles::naive_marginal_cov(agent, features[n], spec);
      CHECK(frobenius_rel(cov.features[n].marginal_cov, naive) < 1e-12);
    }
    CHECK(cov.mean_noise_var == Approx(oracles::naive_mean(noise)).epsilon(1e-13));
  }

  SECTION("non-finite intensity raises") {
    const AgentBelief agent = uniform_agent(2, Vec2(0, 0));
    FeatureBelief f = feature_at(2, Vec2(1, 0), 1.0, 0.5);
    f.particles[1].intensity = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(compute_cov_terms(agent, {f}, fixed_noise(2, 1e-4), spec),
                    NumericalError);
  }
}

TEST_CASE("assembled covariances match the enumeration oracle") {
  const SignalSpec spec = spec_of(3);
  Rng rng(23);
  const AgentBelief agent = oracles::random_agent(12, rng);
  std::vector<FeatureBelief> features{oracles::random_feature(12, 0.9, rng),
                                      oracles::random_feature(12, 0.9, rng),
                                      oracles::random_feature(12, 0.9, rng)};
  const NoiseBelief noise = oracles::random_noise(6, rng);
  const CovTerms cov = compute_cov_terms(agent, features, noise, spec);
  const auto snap = oracles::make_enum_snapshot(agent, features, noise, spec);

  Eigen::MatrixXcd work(spec.sample_count, spec.sample_count);
  for (std::size_t p = 0; p < agent.size(); p += 3) {
    assemble_agent_cov(cov, p, work);
    const Eigen::MatrixXcd expected = oracles::enum_agent_cov(
        snap.outer, snap.existence_mass, p, snap.mean_noise_var, spec.sample_count);
    CHECK(frobenius_rel(work, expected) < 1e-12);
  }
  for (std::size_t n = 0; n < features.size(); ++n) {
    assemble_feature_cov(cov, n, 4, true, work);
    const Eigen::MatrixXcd expected =
        oracles::enum_feature_cov(snap.averaged_outer, snap.existence_mass, n,
                                  snap.mean_noise_var, spec.sample_count, &snap.outer[n][4]);
    CHECK(frobenius_rel(work, expected) < 1e-12);
  }
}

TEST_CASE("agent_weight_update") {
  SECTION("no features: posterior equals prior") {
    const SignalSpec spec = spec_of(5);
    Rng rng(29);
    AgentBelief agent = oracles::random_agent(10, rng);
    const std::vector<double> prior = agent.weights;
    const CovTerms cov = compute_cov_terms(agent, {}, fixed_noise(4, 1e-4), spec);
    Eigen::VectorXcd z(spec.sample_count);
    for (int m = 0; m < spec.sample_count; ++m) {
      z[m] = std::complex<double>(rng.normal(0, 0.01), rng.normal(0, 0.01));
    }
    agent_weight_update({z}, agent, {cov}, spec);
    for (std::size_t p = 0; p < prior.size(); ++p) {
      CHECK(agent.weights[p] == Approx(prior[p]).epsilon(1e-12));
    }
  }

  SECTION("scalar snapshot matches the closed form") {
    const SignalSpec spec = spec_of(1);
    AgentBelief agent = uniform_agent(1, Vec2(0, 0));
    const double mass = 0.6;
    const double intensity = 1.2;
    const FeatureBelief f = feature_at(1, Vec2(5, 0), intensity, mass);
    const double eta = 2e-4;
    const CovTerms cov = compute_cov_terms(agent, {f}, fixed_noise(3, eta), spec);
    Eigen::VectorXcd z(1);
    z[0] = std::complex<double>(0.02, -0.01);
    agent_weight_update({z}, agent, {cov}, spec);
    CHECK(agent.weights[0] == 1.0);  // single particle normalizes to one

    // And the covariance itself matches q * gamma * |h|^2 + eta.
    Eigen::MatrixXcd work(1, 1);
    assemble_agent_cov(cov, 0, work);
    CHECK(work(0, 0).real() == Approx(mass * intensity + eta).epsilon(1e-13));
  }

  SECTION("random snapshot matches enumeration; weights sum to one") {
    const SignalSpec spec = spec_of(3);
    Rng rng(31);
    AgentBelief agent = oracles::random_agent(15, rng);
    std::vector<FeatureBelief> features{oracles::random_feature(15, 0.9, rng),
                                        oracles::random_feature(15, 0.9, rng)};
    const NoiseBelief noise = oracles::random_noise(8, rng);
    const CovTerms cov = compute_cov_terms(agent, features, noise, spec);
    const auto snap = oracles::make_enum_snapshot(agent, features, noise, spec);
    Eigen::VectorXcd z(spec.sample_count);
    for (int m = 0; m < spec.sample_count; ++m) {
      z[m] = std::complex<double>(rng.normal(0, 0.05), rng.normal(0, 0.05));
    }
    const std::vector<double> expected = oracles::enum_agent_weights({z}, agent, {snap}, spec);
    agent_weight_update({z}, agent, {cov}, spec);
    double total = 0.0;
    for (std::size_t p = 0; p < agent.size(); ++p) {
      CHECK(agent.weights[p] == Approx(expected[p]).margin(1e-9));
      total += agent.weights[p];
    }
    CHECK(total == Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("pf_weight_update") {
  const SignalSpec spec = spec_of(1);

  SECTION("existence mass one gives standard importance weights") {
    AgentBelief agent = uniform_agent(3, Vec2(0, 0));
    FeatureBelief f;
    f.particles = {FeatureParticle{Vec2(2, 0), 0.5}, FeatureParticle{Vec2(3, 0), 1.0},
                   FeatureParticle{Vec2(4, 0), 1.5}};
    f.weights = {0.2, 0.3, 0.5};
    const double eta = 1e-3;
    const CovTerms cov = compute_cov_terms(agent, {f}, fixed_noise(2, eta), spec);
    Eigen::VectorXcd z(1);
    z[0] = std::complex<double>(0.05, 0.02);
    FeatureBelief updated = f;
    pf_weight_update(z, updated, cov, 0, spec);
    // Manual normalization without the (vanishing) non-existence term.
    std::vector<double> expected(3);
    double total = 0.0;
    for (int p = 0; p < 3; ++p) {
      const double var = eta + f.particles[p].intensity;
      expected[p] = f.weights[p] * std::exp(-std::norm(z[0]) / var) / (std::numbers::pi * var);
      total += expected[p];
    }
    for (int p = 0; p < 3; ++p) {
      CHECK(updated.weights[p] == Approx(expected[p] / total).epsilon(1e-12));
    }
    CHECK(updated.existence() == Approx(1.0).margin(1e-12));
  }

  SECTION("zero existence mass stays zero") {
    AgentBelief agent = uniform_agent(2, Vec2(0, 0));
    FeatureBelief f = feature_at(2, Vec2(2, 0), 1.0, 1.0);
    f.weights.assign(2, 0.0);
    const CovTerms cov = compute_cov_terms(agent, {f}, fixed_noise(2, 1e-3), spec);
    Eigen::VectorXcd z(1);
    z[0] = std::complex<double>(0.1, 0.0);
    pf_weight_update(z, f, cov, 0, spec);
    CHECK(f.existence() == 0.0);
  }

  SECTION("two features, three particles match the enumeration oracle") {
    Rng rng(37);
    AgentBelief agent = oracles::random_agent(3, rng);
    std::vector<FeatureBelief> features{oracles::random_feature(3, 0.8, rng),
                                        oracles::random_feature(3, 0.8, rng)};
    const NoiseBelief noise = oracles::random_noise(4, rng);
    const CovTerms cov = compute_cov_terms(agent, features, noise, spec);
    const auto snap = oracles::make_enum_snapshot(agent, features, noise, spec);
    Eigen::VectorXcd z(1);
    z[0] = std::complex<double>(0.03, -0.07);
    for (std::size_t n = 0; n < 2; ++n) {
      const auto expected = oracles::enum_feature_update(z, features[n], snap, n, spec);
      FeatureBelief updated = features[n];
      pf_weight_update(z, updated, cov, n, spec);
      CHECK(updated.existence() == Approx(expected.existence).margin(1e-9));
      for (std::size_t p = 0; p < 3; ++p) {
        CHECK(updated.weights[p] == Approx(expected.weights[p]).margin(1e-9));
      }
      CHECK(updated.existence() >= 0.0);
      CHECK(updated.existence() <= 1.0);
    }
  }
}

TEST_CASE("noise_weight_update") {
  const SignalSpec spec = spec_of(3);

  SECTION("no features reduces to pointwise Bayes") {
    NoiseBelief noise;
    noise.particles = {1e-4, 2e-4, 8e-4};
    noise.weights = {0.5, 0.25, 0.25};
    const AgentBelief agent = uniform_agent(2, Vec2(0, 0));
    const CovTerms cov = compute_cov_terms(agent, {}, noise, spec);
    Eigen::VectorXcd z(3);
    z << std::complex<double>(0.01, 0.0), std::complex<double>(0.0, -0.02),
        std::complex<double>(0.005, 0.005);
    NoiseBelief updated = noise;
    noise_weight_update(z, updated, cov, spec);
    std::vector<double> expected(3);
    double total = 0.0;
    for (int p = 0; p < 3; ++p) {
      const double var = noise.particles[p];
      expected[p] = noise.weights[p] * std::exp(-z.squaredNorm() / var) /
                    std::pow(std::numbers::pi * var, 3);
      total += expected[p];
    }
    double sum = 0.0;
    for (int p = 0; p < 3; ++p) {
      CHECK(updated.weights[p] == Approx(expected[p] / total).epsilon(1e-10));
      sum += updated.weights[p];
    }
    CHECK(sum == Approx(1.0).margin(1e-12));
  }

  SECTION("identical particles share the posterior equally") {
    NoiseBelief noise = fixed_noise(4, 3e-4);
    const AgentBelief agent = uniform_agent(2, Vec2(0, 0));
    const FeatureBelief f = feature_at(2, Vec2(2, 0), 1.0, 0.7);
    const CovTerms cov = compute_cov_terms(agent, {f}, noise, spec);
    Eigen::VectorXcd z(3);
    z << std::complex<double>(0.02, 0.01), std::complex<double>(0.0, 0.0),
        std::complex<double>(-0.01, 0.03);
    noise_weight_update(z, noise, cov, spec);
    for (double w : noise.weights) CHECK(w == Approx(0.25).epsilon(1e-12));
  }
}

TEST_CASE("systematic resampling") {
  SECTION("weighted counts stay close to expectation") {
    const std::size_t count = 16;
    std::vector<double> base_weights(count);
    double total = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      base_weights[i] = static_cast<double>(i + 1);
      total += base_weights[i];
    }
    std::vector<double> observed(count, 0.0);
    Rng rng(41);
    const int rounds = 10000;
    for (int r = 0; r < rounds; ++r) {
      AgentBelief b;
      b.particles.resize(count);
      for (std::size_t i = 0; i < count; ++i) b.particles[i].position = Vec2(double(i), 0);
      b.weights = base_weights;
      resample_agent(b, rng);
      for (const AgentState& x : b.particles) observed[int(x.position.x())] += 1.0;
    }
    double chi_sq = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      const double expected = base_weights[i] / total * count * rounds;
      chi_sq += (observed[i] - expected) * (observed[i] - expected) / expected;
    }
    // Upper 1% critical value of chi-square with 15 degrees of freedom.
    CHECK(chi_sq < 30.578);
  }

  SECTION("a single heavy particle takes over") {
    FeatureBelief f;
    f.particles = {FeatureParticle{Vec2(1, 0), 0.1}, FeatureParticle{Vec2(2, 0), 0.2},
                   FeatureParticle{Vec2(3, 0), 0.3}};
    f.weights = {0.0, 0.6, 0.0};
    Rng rng(43);
    resample_feature(f, rng);
    for (const FeatureParticle& phi : f.particles) {
      CHECK(phi.position.x() == 2.0);
    }
    CHECK(f.existence() == Approx(0.6).margin(1e-12));
  }

  SECTION("existence mass is preserved") {
    Rng seed_rng(47);
    for (int trial = 0; trial < 20; ++trial) {
      FeatureBelief f;
      const std::size_t count = 64;
      f.particles.resize(count);
      f.weights.resize(count);
      double mass = 0.0;
      for (std::size_t i = 0; i < count; ++i) {
        f.particles[i].position = Vec2(seed_rng.uniform(-1, 1), seed_rng.uniform(-1, 1));
        f.weights[i] = seed_rng.uniform(0.0, 1e-3);
        mass += f.weights[i];
      }
      Rng rng(100 + trial);
      resample_feature(f, rng);
      CHECK(f.existence() == Approx(mass).margin(1e-12));
    }
  }

  SECTION("zero total weight raises") {
    AgentBelief b;
    b.particles.resize(3);
    b.weights.assign(3, 0.0);
    Rng rng(1);
    CHECK_THROWS_AS(resample_agent(b, rng), DegeneracyError);
  }
}

TEST_CASE("declare_estimate_prune") {
  ModelConfig cfg;

  SECTION("single particle estimates are exact") {
    Beliefs b;
    b.agent.particles = {AgentState{Vec2(1.5, -2.5), Vec2(0.1, 0.2)}};
    b.agent.weights = {1.0};
    b.features = {{feature_at(1, Vec2(7, 3), 1.1, 0.9)}};
    b.noise = {fixed_noise(1, 4e-4)};
    b.noise_var_estimate = {1e-4};
    const StepEstimates est = declare_estimate_prune(b, cfg);
    CHECK((est.agent.position - Vec2(1.5, -2.5)).norm() == 0.0);
    CHECK((est.agent.velocity - Vec2(0.1, 0.2)).norm() == 0.0);
    REQUIRE(est.features.size() == 1);
    CHECK((est.features[0].position - Vec2(7, 3)).norm() < 1e-12);
    CHECK(est.features[0].intensity == Approx(1.1));
    CHECK(est.features[0].existence == Approx(0.9));
    CHECK(est.noise_var[0] == Approx(4e-4));
    CHECK(b.noise_var_estimate[0] == Approx(4e-4));
  }

  SECTION("below-threshold features are not declared but survive pruning") {
    Beliefs b;
    b.agent = uniform_agent(4, Vec2(0, 0));
    b.features = {{feature_at(4, Vec2(1, 0), 1.0, 1.0),
                   feature_at(4, Vec2(2, 0), 1.0, 0.4, false)}};
    b.noise = {fixed_noise(2, 1e-4)};
    b.noise_var_estimate = {1e-4};
    const StepEstimates est = declare_estimate_prune(b, cfg);
    REQUIRE(est.features.size() == 1);  // only the anchor
    CHECK(est.features[0].is_pa);
    CHECK(b.features[0].size() == 2);  // 0.4 >= prune threshold
  }

  SECTION("anchors are never pruned, weak features are") {
    Beliefs b;
    b.agent = uniform_agent(4, Vec2(0, 0));
    b.features = {{feature_at(4, Vec2(1, 0), 1.0, 1e-3),
                   feature_at(4, Vec2(2, 0), 1.0, 1e-3, false)}};
    b.noise = {fixed_noise(2, 1e-4)};
    b.noise_var_estimate = {1e-4};
    declare_estimate_prune(b, cfg);
    REQUIRE(b.features[0].size() == 1);
    CHECK(b.features[0][0].is_pa);
  }
}

TEST_CASE("flat likelihood leaves the agent belief at its prediction") {
  // Zero received signal, one anchor feature with identical intensities, and
  // a single-valued noise belief: the likelihood is the same for every agent
  // particle, so the update must return the prior weights.
  const SignalSpec spec = spec_of(31);
  Rng rng(53);
  AgentBelief agent = oracles::random_agent(40, rng);
  const std::vector<double> prior = agent.weights;
  const FeatureBelief pa = feature_at(40, Vec2(4, 2), 1.0, 1.0);
  const NoiseBelief noise = fixed_noise(16, 6e-5);
  const CovTerms cov = compute_cov_terms(agent, {pa}, noise, spec);
  agent_weight_update({Eigen::VectorXcd::Zero(spec.sample_count)}, agent, {cov}, spec);
  for (std::size_t p = 0; p < prior.size(); ++p) {
    CHECK(std::abs(agent.weights[p] - prior[p]) < 1e-6);
  }
}

TEST_CASE("step is deterministic and keeps existence through resampling") {
  const SignalSpec spec = spec_of(31);
  ModelConfig cfg;

  Beliefs b;
  const std::size_t count = 60;
  Rng rng(59);
  b.agent = uniform_agent(count, Vec2(0, 0));
  for (AgentState& x : b.agent.particles) {
    x.position += Vec2(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3));
  }
  FeatureBelief pa = feature_at(count, Vec2(5, 0), 1.0, 1.0);
  for (FeatureParticle& phi : pa.particles) phi.intensity = rng.uniform(0.5, 1.5);
  b.features = {{pa}};
  NoiseBelief noise;
  noise.particles.resize(30);
  noise.weights.assign(30, 1.0 / 30.0);
  for (double& eta : noise.particles) eta = rng.uniform(1e-5, 1e-3);
  b.noise = {noise};
  b.noise_var_estimate = {b.noise[0].mean()};

  // One propagation path at the anchor distance plus noise.
  Rng data_rng(61);
  const PaFeatures truth{{Vec2(5, 0), 5.0, FeatureKind::Pa, std::nullopt}};
  const Eigen::VectorXcd z =
      synthesize_received(truth, spec, AmplitudeModel{1.0, 0.7, spec.carrier_freq, 80.0},
                          6.3e-5, data_rng);

  Beliefs b2 = b;
  const StepEstimates est1 = step(b, {z}, cfg, spec, StreamKey(71).child(kStreamStep, 1));
  const StepEstimates est2 = step(b2, {z}, cfg, spec, StreamKey(71).child(kStreamStep, 1));

  CHECK(est1.agent.position == est2.agent.position);
  CHECK(est1.agent.velocity == est2.agent.velocity);
  CHECK(est1.noise_var == est2.noise_var);
  REQUIRE(est1.features.size() == est2.features.size());
  for (std::size_t i = 0; i < est1.features.size(); ++i) {
    CHECK(est1.features[i].position == est2.features[i].position);
    CHECK(est1.features[i].existence == est2.features[i].existence);
  }
  REQUIRE(b.features[0].size() == b2.features[0].size());
  for (std::size_t n = 0; n < b.features[0].size(); ++n) {
    CHECK(b.features[0][n].existence() == b2.features[0][n].existence());
  }
}
