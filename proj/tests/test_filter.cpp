#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "spoc/errors.hpp"
#include "spoc/filter.hpp"
#include "spoc/forward.hpp"

namespace spoc {
namespace {

using oracle::Kalman;
using oracle::Mat;
using oracle::Vec;
using oracle::to_vec;
using testing::small_heat;

ParticleCloud cloud_of(std::size_t S, std::size_t dofs) {
  return init_cloud(S, [&](std::size_t s) { return Field(dofs, static_cast<double>(s)); });
}

TEST(Cloud, InitHasUniformWeights) {
  const auto cloud = cloud_of(8, 3);
  EXPECT_EQ(cloud.size(), 8u);
  for (double w : cloud.normalized) EXPECT_DOUBLE_EQ(w, 0.125);
  for (double w : cloud.log_weights) EXPECT_EQ(w, 0.0);
  EXPECT_DOUBLE_EQ(cloud.effective_sample_size(), 8.0);
  EXPECT_EQ(cloud.positions[5][2], 5.0);
  EXPECT_THROW(cloud_of(0, 3), ConfigError);
}

TEST(Cloud, InitFromInitialLawIsReproducible) {
  const auto ops = assemble(1.0, 16, 0.01);
  const auto spec = linear_gaussian_test(ops);
  const auto a = init_cloud(50, spec, 3), b = init_cloud(50, spec, 3), c = init_cloud(50, spec, 4);
  EXPECT_EQ(a.positions, b.positions);
  EXPECT_NE(a.positions, c.positions);
  EXPECT_NE(a.positions[0], a.positions[1]);
}

TEST(Normalize, Examples) {
  auto cloud = cloud_of(4, 1);
  const std::vector<double> raw{1.0, 2.0, 3.0, 4.0};
  cloud.set_raw_weights(raw);
  normalize(cloud);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(cloud.normalized[i], 0.1 * (i + 1), 1e-15);
  EXPECT_NEAR(std::accumulate(cloud.normalized.begin(), cloud.normalized.end(), 0.0), 1.0, 1e-15);
  EXPECT_NEAR(cloud.effective_sample_size(), 1.0 / 0.3, 1e-12);
}

TEST(Normalize, SurvivesHugeLogWeights) {
  auto cloud = cloud_of(2, 1);
  cloud.log_weights = {1000.0, 1000.0 + std::log(3.0)};
  normalize(cloud);
  EXPECT_NEAR(cloud.normalized[0], 0.25, 1e-12);
  EXPECT_NEAR(cloud.normalized[1], 0.75, 1e-12);
  cloud.log_weights = {-2000.0, -2000.0};
  normalize(cloud);
  EXPECT_DOUBLE_EQ(cloud.normalized[0], 0.5);
}

TEST(Normalize, RejectsBadWeights) {
  auto cloud = cloud_of(2, 1);
  const std::vector<double> bad{1.0, 0.0};
  EXPECT_THROW(cloud.set_raw_weights(bad), Error);
  const std::vector<double> short_w{1.0};
  EXPECT_THROW(cloud.set_raw_weights(short_w), ShapeError);
}

TEST(Offspring, IntegerExpectationsAreExact) {
  const std::vector<double> w{0.5, 0.25, 0.25};
  for (double u : {0.0, 0.3, 0.999}) {
    EXPECT_EQ(offspring_counts(w, 4, u), (std::vector<std::size_t>{2, 1, 1}));
  }
  const std::vector<double> uniform(5, 0.2);
  EXPECT_EQ(offspring_counts(uniform, 5, 0.7), (std::vector<std::size_t>(5, 1)));
}

TEST(Offspring, TwoParticleExample) {
  // Expected counts 0.9 and 2.1: the first gets one child with probability 0.9.
  const std::vector<double> w{0.3, 0.7};
  EXPECT_EQ(offspring_counts(w, 3, 0.05), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(offspring_counts(w, 3, 0.95), (std::vector<std::size_t>{0, 3}));
}

TEST(Offspring, RejectsOffsetOutsideUnitInterval) {
  const std::vector<double> w{0.5, 0.5};
  EXPECT_THROW(offspring_counts(w, 2, 1.0), Error);
  EXPECT_THROW(offspring_counts(w, 2, -0.1), Error);
}

TEST(Offspring, MarginalsAreFloorCeilAndUnbiased) {
  const std::vector<double> w{0.07, 0.21, 0.13, 0.02, 0.33, 0.24};
  const std::size_t S = w.size(), trials = 100000;
  std::vector<double> sum(S, 0.0);
  for (std::size_t t = 0; t < trials; ++t) {
    const double u = uniform01(1, stream_id(Stream::Test), static_cast<std::uint32_t>(t));
    const auto c = offspring_counts(w, S, u);
    ASSERT_EQ(std::accumulate(c.begin(), c.end(), std::size_t{0}), S);
    for (std::size_t s = 0; s < S; ++s) {
      const double a = static_cast<double>(S) * w[s];
      ASSERT_TRUE(c[s] == static_cast<std::size_t>(std::floor(a)) || c[s] == static_cast<std::size_t>(std::ceil(a)));
      sum[s] += static_cast<double>(c[s]);
    }
  }
  for (std::size_t s = 0; s < S; ++s) {
    const double a = static_cast<double>(S) * w[s];
    const double f = a - std::floor(a);
    const double sd = std::sqrt(f * (1.0 - f) / static_cast<double>(trials));
    EXPECT_NEAR(sum[s] / trials, a, 4.0 * sd + 1e-12) << s;
  }
}

TEST(Offspring, VarianceBelowMultinomial) {
  const std::vector<double> w{0.07, 0.21, 0.13, 0.02, 0.33, 0.24};
  const std::size_t S = w.size(), trials = 20000;
  auto total_variance = [&](auto draw) {
    std::vector<double> s1(S, 0.0), s2(S, 0.0);
    for (std::size_t t = 0; t < trials; ++t) {
      const auto c = draw(t);
      for (std::size_t s = 0; s < S; ++s) {
        s1[s] += static_cast<double>(c[s]);
        s2[s] += static_cast<double>(c[s] * c[s]);
      }
    }
    double v = 0.0;
    for (std::size_t s = 0; s < S; ++s) v += s2[s] / trials - (s1[s] / trials) * (s1[s] / trials);
    return v;
  };
  const double branching = total_variance([&](std::size_t t) {
    return offspring_counts(w, S, uniform01(2, stream_id(Stream::Test), static_cast<std::uint32_t>(t)));
  });
  const double multinomial = total_variance([&](std::size_t t) {
    return multinomial_counts(w, S, 2, stream_id(Stream::Test, 1), static_cast<std::uint32_t>(t));
  });
  // Analytic: sum f(1 - f) against sum S w (1 - w).
  double expected_branching = 0.0, expected_multinomial = 0.0;
  for (double wi : w) {
    const double a = static_cast<double>(S) * wi, f = a - std::floor(a);
    expected_branching += f * (1.0 - f);
    expected_multinomial += a * (1.0 - wi);
  }
  EXPECT_NEAR(branching, expected_branching, 0.05 * expected_branching);
  EXPECT_NEAR(multinomial, expected_multinomial, 0.05 * expected_multinomial);
  EXPECT_LT(branching, multinomial);
}

TEST(Branch, ChildrenInheritParentsAndWeightsReset) {
  auto cloud = cloud_of(4, 2);
  cloud.set_raw_weights(std::vector<double>{0.5, 0.25, 0.125, 0.125});
  normalize(cloud);
  const std::vector<std::size_t> counts{2, 1, 0, 1};
  branch(cloud, counts, 17);
  ASSERT_EQ(cloud.size(), 4u);
  EXPECT_EQ(cloud.positions[0][0], 0.0);
  EXPECT_EQ(cloud.positions[1][0], 0.0);
  EXPECT_EQ(cloud.positions[2][0], 1.0);
  EXPECT_EQ(cloud.positions[3][0], 3.0);
  EXPECT_DOUBLE_EQ(cloud.effective_sample_size(), 4.0);
  EXPECT_EQ(cloud.interval_start, 17u);
  for (double lw : cloud.log_weights) EXPECT_EQ(lw, 0.0);
  EXPECT_THROW(branch(cloud, std::vector<std::size_t>{1, 1, 1}, 0), ShapeError);
  EXPECT_THROW(branch(cloud, std::vector<std::size_t>{1, 1, 1, 0}, 0), Error);
}

TEST(Branch, SeededBranchingIsReproducible) {
  auto a = cloud_of(50, 1), b = cloud_of(50, 1);
  std::vector<double> raw(50);
  for (std::size_t i = 0; i < 50; ++i) raw[i] = 1.0 + std::sin(static_cast<double>(i));
  for (auto* c : {&a, &b}) {
    c->set_raw_weights(raw);
    normalize(*c);
  }
  EXPECT_EQ(branch(a, 5, 10), branch(b, 5, 10));
  EXPECT_EQ(a.positions, b.positions);
  EXPECT_DOUBLE_EQ(a.effective_sample_size(), 50.0);
}

TEST(SampleIndex, InvertsCumulativeWeights) {
  const std::vector<double> w{0.2, 0.5, 0.3};
  EXPECT_EQ(sample_index(w, 0.0), 0u);
  EXPECT_EQ(sample_index(w, 0.19), 0u);
  EXPECT_EQ(sample_index(w, 0.2), 1u);
  EXPECT_EQ(sample_index(w, 0.69), 1u);
  EXPECT_EQ(sample_index(w, 0.71), 2u);
  EXPECT_EQ(sample_index(w, std::nextafter(1.0, 0.0)), 2u);
}

TEST(Posterior, WeightedAverages) {
  auto cloud = cloud_of(3, 2);
  cloud.set_raw_weights(std::vector<double>{1.0, 1.0, 2.0});
  normalize(cloud);
  const Field m = posterior_mean(cloud);
  EXPECT_NEAR(m[0], 0.25 * 0 + 0.25 * 1 + 0.5 * 2, 1e-15);
  EXPECT_NEAR(posterior_expectation(cloud, [](const Field& x) { return x[0] * x[0]; }), 0.25 + 2.0, 1e-15);
}

/// h^j(x, u) = value_j everywhere.
class ConstantObservation final : public ObservationMap {
 public:
  explicit ConstantObservation(std::vector<double> values) : values_(std::move(values)) {}
  std::size_t dimension() const noexcept override { return values_.size(); }
  void observe(const Field&, const Field&, std::span<double> out) const override {
    std::copy(values_.begin(), values_.end(), out.begin());
  }
  void gradient(const Field& x, const Field&, std::vector<Field>& hx, std::vector<Field>& hu) const override {
    hx.assign(values_.size(), Field(x.size()));
    hu.assign(values_.size(), Field(x.size()));
  }

 private:
  std::vector<double> values_;
};

TEST(Propagate, TrivialObservationLeavesWeights) {
  auto cfg = small_heat().config;
  cfg.observation_gain = 0.0;
  const auto p = make_problem(cfg);
  auto cloud = init_cloud(20, p.spec, 1);
  cloud.log_weights[3] = 0.7;
  const std::vector<double> dy{0.3, -0.1, 0.2, 0.0, 0.5};
  propagate_and_weight(cloud, p.ops.zeros(), dy, p.spec, p.ops, {.seed = 1, .step = 0});
  for (std::size_t s = 0; s < 20; ++s) EXPECT_EQ(cloud.log_weights[s], s == 3 ? 0.7 : 0.0);
}

TEST(Propagate, SelfConsistentIncrementReinforces) {
  // dY = h dt exactly gives every particle the factor exp(|h|^2 dt / 2).
  auto p = small_heat();
  const std::vector<double> c{0.4, -1.5, 0.0, 2.0, 0.3};
  p.spec.h = std::make_shared<ConstantObservation>(c);
  auto cloud = init_cloud(10, p.spec, 2);
  std::vector<double> dy(c.size());
  double norm2 = 0.0;
  for (std::size_t j = 0; j < c.size(); ++j) dy[j] = c[j] * 0.01, norm2 += c[j] * c[j];
  propagate_and_weight(cloud, p.ops.zeros(), dy, p.spec, p.ops, {.seed = 2, .step = 0});
  for (double lw : cloud.log_weights) EXPECT_NEAR(lw, 0.5 * norm2 * 0.01, 1e-15);
}

TEST(Propagate, MovesWithParticleDynamics) {
  const auto p = small_heat();
  auto cloud = init_cloud(5, p.spec, 3);
  const auto before = cloud.positions;
  const std::vector<double> dy{0.01, 0.0, -0.02, 0.0, 0.03};
  propagate_and_weight(cloud, p.ops.zeros(), dy, p.spec, p.ops, {.seed = 3, .step = 4});
  for (std::size_t s = 0; s < 5; ++s) {
    std::vector<double> dw(p.spec.n_w());
    standard_normals(3, stream_id(Stream::Particle, 0, static_cast<std::uint32_t>(s)), 4, Lane::W, dw);
    for (double& v : dw) v *= 0.1;
    const Field expected = step_particle(before[s], p.ops.zeros(), dw, dy, p.spec, p.ops);
    EXPECT_LT(max_abs_difference(cloud.positions[s], expected), 1e-15);
  }
}

TEST(Propagate, ThreadCountDoesNotChangeResult) {
  const auto p = small_heat();
  auto a = init_cloud(16, p.spec, 4), b = a;
  const std::vector<double> dy{0.01, 0.0, -0.02, 0.0, 0.03};
  propagate_and_weight(a, p.ops.zeros(), dy, p.spec, p.ops, {.seed = 4, .step = 1, .threads = 1});
  propagate_and_weight(b, p.ops.zeros(), dy, p.spec, p.ops, {.seed = 4, .step = 1, .threads = 3});
  EXPECT_EQ(a.positions, b.positions);
  EXPECT_EQ(a.log_weights, b.log_weights);
}

TEST(Propagate, BlowUpNamesTheParticle) {
  auto p = small_heat();
  p.spec.drift = Pointwise::make([](double x, double) { return x > 0.5 ? 1e308 * (1.0 + x * x) : 0.0; },
                                 [](double, double) { return 0.0; }, [](double, double) { return 0.0; });
  auto cloud = init_cloud(3, [&](std::size_t s) { return Field(p.ops.dofs(), s == 1 ? 1.0 : 0.0); });
  const std::vector<double> dy(p.spec.d(), 0.0);
  try {
    propagate_and_weight(cloud, p.ops.zeros(), dy, p.spec, p.ops, {.seed = 5, .step = 6});
    propagate_and_weight(cloud, p.ops.zeros(), dy, p.spec, p.ops, {.seed = 5, .step = 7});
    FAIL() << "expected a blow-up";
  } catch (const BlowUpError& e) {
    ASSERT_TRUE(e.particle().has_value());
    EXPECT_EQ(*e.particle(), 1u);
    EXPECT_GE(e.step(), 7u);
    EXPECT_NE(std::string(e.what()).find("particle 1"), std::string::npos) << e.what();
  }
}

/// Linear-Gaussian model: particle filter against the exact Kalman filter.
class KalmanComparison : public ::testing::Test {
 protected:
  FemOperators ops = assemble(1.0, 16, 0.01);
  ModelSpec spec = linear_gaussian_test(ops);
  std::size_t steps = 50;

  struct Run {
    Vec kalman_mean;
    Mat kalman_cov;
    Vec filter_mean;
  };

  Run run(std::size_t S, std::uint64_t truth_seed, std::uint64_t filter_seed) const {
    const oracle::DenseFem fem(1.0, 16);
    const Mat F = (fem.M + 0.01 * fem.A).ldlt().solve(fem.M);
    Mat E(fem.dofs(), static_cast<Eigen::Index>(spec.n_w()));
    for (std::size_t i = 0; i < spec.n_w(); ++i) {
      E.col(static_cast<Eigen::Index>(i)) = *spec.sigma[i].amplitude.constant * to_vec(spec.sigma[i].direction);
    }
    const auto& h = dynamic_cast<const ProjectionObservation&>(*spec.h);
    Mat H(static_cast<Eigen::Index>(spec.d()), fem.dofs());
    for (std::size_t j = 0; j < spec.d(); ++j) {
      H.row(static_cast<Eigen::Index>(j)) = 4.0 * (fem.M * to_vec(h.sensors()[j])).transpose();
    }
    Mat P0 = Mat::Zero(fem.dofs(), fem.dofs());
    for (const Field& m : spec.initial.modes) P0 += to_vec(m) * to_vec(m).transpose();
    Kalman kf(F, E, H, 0.01, to_vec(spec.initial.mean), P0);

    std::vector<double> xi(spec.initial.modes.size());
    standard_normals(truth_seed, stream_id(Stream::Truth, 9), 0, Lane::Aux, xi);
    const std::vector<Field> u(steps, ops.zeros());
    const auto noise = sample_path(truth_seed, stream_id(Stream::Truth), steps, spec.n_w(), spec.d(), 0.01);
    const auto truth = simulate_truth(spec, ops, spec.initial.sample(xi), u, noise);
    const auto obs = synthesize_observation(truth, u, noise, spec);

    auto cloud = init_cloud(S, spec, filter_seed);
    for (std::size_t k = 0; k < steps; ++k) {
      Vec dy(static_cast<Eigen::Index>(spec.d()));
      for (std::size_t j = 0; j < spec.d(); ++j) dy(static_cast<Eigen::Index>(j)) = obs.dy_row(k)[j];
      kf.step(dy, Vec::Zero(fem.dofs()));
      propagate_and_weight(cloud, u[k], obs.dy_row(k), spec, ops, {.seed = filter_seed, .step = k});
      normalize(cloud);
      if ((k + 1) % 5 == 0) branch(cloud, filter_seed, k + 1);
    }
    normalize(cloud);
    return {kf.mean(), kf.cov(), to_vec(posterior_mean(cloud))};
  }
};

TEST_F(KalmanComparison, PosteriorMeanWithinSamplingError) {
  const std::size_t S = 2000;
  const Run r = run(S, 11, 12);
  // Each nodal posterior mean within 3 sigma / sqrt(S) of the exact one.
  const Vec sd = r.kalman_cov.diagonal().cwiseSqrt();
  for (Eigen::Index i = 0; i < sd.size(); ++i) {
    EXPECT_LT(std::abs(r.filter_mean(i) - r.kalman_mean(i)), 3.0 * sd(i) / std::sqrt(static_cast<double>(S)))
        << "node " << i;
  }
}

TEST_F(KalmanComparison, ErrorShrinksWithPopulation) {
  std::vector<double> rmse;
  for (std::size_t S : {50, 200, 800}) {
    double sq = 0.0;
    for (std::uint64_t rep = 0; rep < 6; ++rep) {
      const Run r = run(S, 20 + rep, 100 + rep);
      sq += (r.filter_mean - r.kalman_mean).squaredNorm() / static_cast<double>(r.kalman_mean.size());
    }
    rmse.push_back(std::sqrt(sq / 6.0));
  }
  EXPECT_LT(rmse[1], rmse[0]);
  EXPECT_LT(rmse[2], rmse[1]);
  // Sixteen times the particles should at least halve the error (S^{-1/2} gives a quarter).
  EXPECT_LT(rmse[2], 0.5 * rmse[0]);
}

}  // namespace
}  // namespace spoc
