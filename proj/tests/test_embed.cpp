#include <gtest/gtest.h>

#include "odex/embed.hpp"
#include "odex/synthetic.hpp"
#include "support.hpp"

using namespace odex;
namespace t = odex::testing;
namespace naive = odex::testing::naive;

namespace {

RowMatrix random_points(std::mt19937_64& rng, int m, int cols, double scale = 1.0)
{
  std::normal_distribution<double> normal(0.0, scale);
  RowMatrix x(m, cols);
  for (int a = 0; a < m; ++a)
    for (int c = 0; c < cols; ++c)
      x(a, c) = normal(rng);
  return x;
}

std::vector<std::vector<double>> nested(const RowMatrix& x)
{
  std::vector<std::vector<double>> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index a = 0; a < x.rows(); ++a)
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      out[static_cast<std::size_t>(a)].push_back(x(a, c));
  return out;
}

std::vector<double> random_pd(std::mt19937_64& rng, int m)
{
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> p(static_cast<std::size_t>(m));
  for (auto& v : p)
    v = u(rng);
  return naive::normalized(p);
}

DensityVector as_density(std::vector<double> values)
{
  DensityVector d;
  d.values = std::move(values);
  for (std::size_t k = 0; k < d.values.size(); ++k)
    d.instance_ids.push_back(static_cast<SceneId>(k));
  return d;
}

} // namespace

TEST(PairwiseDistances, Examples)
{
  RowMatrix p(2, 2);
  p << 0, 0, 3, 4;
  auto d = pairwise_sq_dists(p);
  EXPECT_EQ(d(0, 1), 25.0);
  EXPECT_EQ(d(1, 0), 25.0);
  EXPECT_EQ(d(0, 0), 0.0);
  EXPECT_EQ(pairwise_sq_dists(RowMatrix::Ones(1, 3))(0, 0), 0.0);
  RowMatrix bad(1, 1);
  bad << NAN;
  EXPECT_THROW(pairwise_sq_dists(bad), Error);

  std::mt19937_64 rng(1);
  auto x = random_points(rng, 8, 3);
  auto dx = pairwise_sq_dists(x);
  auto nx = nested(x);
  for (std::size_t a = 0; a < 8; ++a)
    for (std::size_t b = 0; b < 8; ++b)
      EXPECT_LT(t::rel_err(dx(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)), naive::d2(nx, a, b)), 1e-12);
}

TEST(NeighborDistribution, TetrahedronIsUniform)
{
  RowMatrix d = RowMatrix::Constant(4, 4, 2.0);
  d.diagonal().setZero();
  auto pn = neighbor_distribution(d, 3.0);
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      EXPECT_NEAR(pn.p(a, b), a == b ? 0.0 : 1.0 / 12.0, 1e-15);
}

TEST(NeighborDistribution, RowsHitTargetPerplexity)
{
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    int m = 10 + trial * 7;
    auto d = pairwise_sq_dists(random_points(rng, m, 4, 2.0));
    double perp = 2.0 + trial;
    auto cond = conditional_neighbors(d, perp);
    for (int a = 0; a < m; ++a) {
      double h = 0.0, total = 0.0;
      for (int b = 0; b < m; ++b) {
        total += cond(a, b);
        if (cond(a, b) > 0.0)
          h -= cond(a, b) * std::log2(cond(a, b));
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
      EXPECT_EQ(cond(a, a), 0.0);
      EXPECT_LT(std::abs(std::exp2(h) - perp) / perp, 1e-5) << "row " << a;
    }
    auto pn = neighbor_distribution(d, perp);
    EXPECT_NEAR(pn.p.sum(), 1.0, 1e-9);
    EXPECT_EQ((pn.p - pn.p.transpose()).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(pn.p.diagonal().cwiseAbs().maxCoeff(), 0.0);
    EXPECT_LT((pn.p - (cond + cond.transpose()) / (2.0 * m)).cwiseAbs().maxCoeff(), 1e-18);
  }
}

TEST(NeighborDistribution, InfeasibleAndDegenerate)
{
  RowMatrix d = RowMatrix::Zero(3, 3);
  EXPECT_THROW(neighbor_distribution(d, 3.0), Error);
  EXPECT_THROW(neighbor_distribution(d, 0.5), Error);
  auto pn = neighbor_distribution(d, 2.0);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      EXPECT_NEAR(pn.p(a, b), a == b ? 0.0 : 1.0 / 6.0, 1e-15);
}

TEST(LowDimDensity, Examples)
{
  RowMatrix two(2, 2);
  two << 0, 0, 7, -3;
  auto q = low_dim_density(two);
  EXPECT_DOUBLE_EQ(q[0], 0.5);
  EXPECT_DOUBLE_EQ(q[1], 0.5);
  auto same = low_dim_density(RowMatrix::Constant(5, 2, 1.25));
  for (double v : same)
    EXPECT_DOUBLE_EQ(v, 0.2);

  std::mt19937_64 rng(3);
  auto x = random_points(rng, 10, 2);
  EXPECT_LT(t::max_rel_err(low_dim_density(x), naive::q_density(nested(x))), 1e-12);
}

TEST(StudentT, Examples)
{
  RowMatrix two(2, 1);
  two << 0, 4;
  auto q = student_t_q(two);
  EXPECT_DOUBLE_EQ(q(0, 1), 0.5);
  EXPECT_EQ(q(0, 0), 0.0);
  auto same = student_t_q(RowMatrix::Zero(3, 2));
  EXPECT_NEAR(same(0, 1), 1.0 / 6.0, 1e-15);
  EXPECT_EQ(same(2, 2), 0.0);

  std::mt19937_64 rng(4);
  auto x = random_points(rng, 9, 2);
  auto ref = naive::q_student(nested(x));
  auto got = student_t_q(x);
  for (int a = 0; a < 9; ++a)
    for (int b = 0; b < 9; ++b)
      EXPECT_LT(t::rel_err(got(a, b), ref[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)]), 1e-12);
}

TEST(Objective, MatchesDirectSummation)
{
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    int m = 3 + trial;
    int dim = 1 + trial % 2;
    auto x = random_points(rng, m, dim, 1.5);
    auto pd = random_pd(rng, m);
    auto pn = neighbor_distribution(pairwise_sq_dists(random_points(rng, m, 5)), std::min(2.0, m - 1.0));
    double lambda = 0.1 * trial;
    auto v = objective(x, pd, pn, lambda);
    auto [kd, kn] = naive::objective(nested(x), pd, nested(pn.p));
    EXPECT_LT(std::abs(v.kl_density - kd), 1e-12 * std::max(1.0, kd));
    EXPECT_LT(std::abs(v.kl_neighbor - kn), 1e-12 * std::max(1.0, kn));
    EXPECT_NEAR(v.total, kd + lambda * kn, 1e-11);
    EXPECT_GE(v.kl_density, -1e-15);
    EXPECT_GE(v.kl_neighbor, -1e-15);
  }
}

TEST(Objective, UniformTwoPointsAndZeroLambda)
{
  RowMatrix x(2, 1);
  x << -3, 5;
  auto pn = neighbor_distribution(pairwise_sq_dists(x), 1.0);
  auto v = objective(x, std::vector<double>{0.5, 0.5}, pn, 0.1);
  EXPECT_NEAR(v.kl_density, 0.0, 1e-15);
  std::mt19937_64 rng(6);
  auto y = random_points(rng, 6, 2);
  auto pn6 = neighbor_distribution(pairwise_sq_dists(y), 2.0);
  auto pd = random_pd(rng, 6);
  auto w = objective(y, pd, pn6, 0.0);
  EXPECT_EQ(w.total, w.kl_density);
}

TEST(Objective, RigidMotionInvariance)
{
  std::mt19937_64 rng(7);
  auto x = random_points(rng, 15, 2);
  auto pd = random_pd(rng, 15);
  auto pn = neighbor_distribution(pairwise_sq_dists(random_points(rng, 15, 4)), 4.0);
  auto base = objective(x, pd, pn, 0.1);
  const double th = 0.7;
  RowMatrix rot(2, 2);
  rot << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
  RowMatrix y = x * rot.transpose();
  y.col(0).array() += 3.5;
  y.col(1).array() -= 1.25;
  auto moved = objective(y, pd, pn, 0.1);
  EXPECT_NEAR(moved.kl_density, base.kl_density, 1e-10);
  EXPECT_NEAR(moved.kl_neighbor, base.kl_neighbor, 1e-10);
  RowMatrix r = x;
  r.col(0) *= -1.0;
  EXPECT_NEAR(objective(r, pd, pn, 0.1).kl_density, base.kl_density, 1e-10);
}

TEST(Gradient, MatchesCentralDifferences)
{
  std::mt19937_64 rng(8);
  double worst = 0.0;
  for (int m : {5, 12, 30})
    for (int dim : {1, 2})
      for (double lambda : {0.0, 0.1, 1.0})
        for (int rep = 0; rep < 3; ++rep) {
          auto x = random_points(rng, m, dim);
          auto pd = random_pd(rng, m);
          auto pn = neighbor_distribution(pairwise_sq_dists(random_points(rng, m, 3)), std::min(3.0, (m - 1) / 2.0));
          auto g = gradient(x, pd, pn, lambda);
          RowMatrix fd(m, dim);
          const double step = 1e-5;
          for (int a = 0; a < m; ++a)
            for (int c = 0; c < dim; ++c) {
              RowMatrix xp = x, xm = x;
              xp(a, c) += step;
              xm(a, c) -= step;
              fd(a, c) = (objective(xp, pd, pn, lambda).total - objective(xm, pd, pn, lambda).total) / (2 * step);
            }
          double err = (g - fd).cwiseAbs().maxCoeff() / fd.cwiseAbs().maxCoeff();
          worst = std::max(worst, err);
        }
  EXPECT_LT(worst, 1e-4);
}

TEST(Gradient, StationaryAndTranslationInvariant)
{
  RowMatrix x = RowMatrix::Constant(4, 2, 0.3);
  RowMatrix d = RowMatrix::Constant(4, 4, 1.0);
  d.diagonal().setZero();
  auto pn = neighbor_distribution(d, 2.0);
  auto g = gradient(x, std::vector<double>(4, 0.25), pn, 0.1);
  EXPECT_LT(g.cwiseAbs().maxCoeff(), 1e-15);

  std::mt19937_64 rng(9);
  auto y = random_points(rng, 10, 2);
  auto pd = random_pd(rng, 10);
  auto pn10 = neighbor_distribution(pairwise_sq_dists(random_points(rng, 10, 3)), 3.0);
  auto g0 = gradient(y, pd, pn10, 0.0);
  RowMatrix shifted = y.array() + 4.0;
  EXPECT_LT((gradient(shifted, pd, pn10, 0.0) - g0).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Optimize, DegenerateSizes)
{
  EmbedConfig cfg;
  cfg.dim = 1;
  auto r1 = optimize(as_density({1.0}), RowMatrix::Ones(1, 3), cfg);
  ASSERT_EQ(r1.coords.rows(), 1);
  EXPECT_EQ(r1.coords(0, 0), 0.0);

  RowMatrix f(2, 3);
  f << 0, 0, 0, 1, 1, 1;
  cfg.dim = 2;
  auto r2 = optimize(as_density({0.5, 0.5}), f, cfg);
  EXPECT_NEAR(r2.kl_density, 0.0, 1e-12);
  EXPECT_TRUE(r2.coords.allFinite());
  EXPECT_GT((r2.coords.row(0) - r2.coords.row(1)).norm(), 0.0);
  auto t2 = tsne_embed(as_density({0.5, 0.5}), f, cfg);
  EXPECT_TRUE(t2.coords.allFinite());
}

TEST(Optimize, ConfigValidation)
{
  EmbedConfig cfg;
  cfg.dim = 3;
  EXPECT_THROW(cfg.validate(), Error);
  cfg.dim = 2;
  cfg.lambda = -1;
  EXPECT_THROW(cfg.validate(), Error);
  cfg.lambda = 0.1;
  EXPECT_EQ(cfg.target_perplexity(), 14.0);
  cfg.dim = 1;
  EXPECT_EQ(cfg.target_perplexity(), 7.0);
  EXPECT_EQ(effective_perplexity(cfg, 1000), 7.0);
  EXPECT_EQ(effective_perplexity(cfg, 10), 3.0);
  EXPECT_EQ(effective_perplexity(cfg, 2), 1.0);
}

TEST(Optimize, DeterministicAndWarmStart)
{
  std::mt19937_64 rng(10);
  auto f = random_points(rng, 60, 4, 3.0);
  auto pd = as_density(random_pd(rng, 60));
  EmbedConfig cfg;
  cfg.seed = 17;
  cfg.max_iters = 300;
  auto a = optimize(pd, f, cfg);
  auto b = optimize(pd, f, cfg);
  EXPECT_TRUE(a.coords == b.coords);
  EXPECT_EQ(a.kl_density, b.kl_density);
  cfg.seed = 18;
  auto c = optimize(pd, f, cfg);
  EXPECT_FALSE(a.coords == c.coords);

  auto pn = build_neighbors(f, cfg);
  auto warm = optimize(pd, pn, cfg, a.coords);
  EXPECT_TRUE(warm.coords.allFinite());
  EXPECT_THROW(optimize(pd, pn, cfg, RowMatrix::Zero(3, 2)), Error);
}

TEST(Optimize, PreservesMixtureDensityRanking)
{
  nlohmann::json j = {{"num_scenes", 300},
                      {"feature_dim", 8},
                      {"labels", {{{"name", "chair"}, {"components", {{{"weight", 0.7}}, {{"weight", 0.2}}, {{"weight", 0.1}}}}}}}};
  auto [ds, truth] = generate_synthetic(parse_generator_config(j), 4);
  auto pd = single_density(ds, 0, Bandwidth(40));
  EmbedConfig cfg;
  cfg.seed = 1;
  auto features = support_features(ds, pd);
  auto pn = build_neighbors(features, cfg);
  auto dsne = optimize(pd, pn, cfg);
  auto tsne = tsne_embed(pd, pn, cfg);
  auto qd = low_dim_density(dsne.coords);
  EXPECT_GE(t::spearman(pd.values, qd), 0.9);
  EXPECT_LE(dsne.kl_density, 0.1 * tsne.kl_density);

  std::array<double, 3> mean_q{}, count{};
  for (std::size_t a = 0; a < qd.size(); ++a) {
    auto c = static_cast<std::size_t>(truth.component(ds, {0, pd.instance_ids[a]}));
    mean_q[c] += qd[a];
    count[c] += 1;
  }
  EXPECT_GT(mean_q[0] / count[0], mean_q[2] / count[2]);
}

TEST(Optimize, TsneObjectiveDecreases)
{
  std::mt19937_64 rng(11);
  auto f = random_points(rng, 80, 5, 2.0);
  auto pd = as_density(random_pd(rng, 80));
  EmbedConfig cfg;
  cfg.dim = 2;
  auto r = tsne_embed(pd, f, cfg);
  // After exaggeration ends, the sampled objective is non-increasing up to a
  // small tolerance for momentum overshoot.
  double prev = INFINITY;
  for (auto [it, val] : r.trace) {
    if (it < cfg.momentum_switch_iter)
      continue;
    EXPECT_LE(val, prev + 1e-3 * std::abs(prev));
    prev = val;
  }
  EXPECT_GE(r.trace.size(), 2u);
}

TEST(Optimize, FixedBandwidthNeighbors)
{
  std::mt19937_64 rng(12);
  auto f = random_points(rng, 30, 3, 2.0);
  EmbedConfig cfg;
  cfg.neighbor_mode = NeighborMode::fixed_bandwidth;
  cfg.neighbor_bandwidth = 40;
  auto pn = build_neighbors(f, cfg);
  EXPECT_NEAR(pn.p.sum(), 1.0, 1e-12);
  auto r = optimize(as_density(random_pd(rng, 30)), pn, cfg);
  EXPECT_TRUE(r.coords.allFinite());
}
