#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "odex/density.hpp"

namespace odex {

/// Symmetric tSNE input affinities P_n (zero diagonal, total mass 1).
struct NeighborDistribution
{
  std::size_t m = 0;
  RowMatrix p;
  double perplexity = 0.0;
};

enum class NeighborMode
{
  /// Per-point Gaussian precision calibrated to a target perplexity.
  perplexity,
  /// One Gaussian bandwidth for every point (the KDE bandwidth).
  fixed_bandwidth
};

struct EmbedConfig
{
  int dim = 2;
  double lambda = 0.1;
  /// Defaults to 7 for 1D and 14 for 2D embeddings.
  std::optional<double> perplexity;
  int max_iters = 1000;
  double convergence_tol = 1e-6;
  int convergence_window = 50;
  double learning_rate = 50.0;
  std::uint64_t seed = 0;

  double init_scale = 1e-2;
  double exaggeration = 4.0;
  int exaggeration_iters = 50;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  int momentum_switch_iter = 100;

  NeighborMode neighbor_mode = NeighborMode::perplexity;
  double neighbor_bandwidth = default_bandwidth;

  /// Bandwidth of the low-dimensional KDE Q_d; fixed.
  static constexpr double q_bandwidth = 1.0;

  double target_perplexity() const { return perplexity.value_or(dim == 1 ? 7.0 : 14.0); }

  void validate() const
  {
    if (dim != 1 && dim != 2)
      throw Error(ErrorCode::invalid_argument, "embedding dimension must be 1 or 2");
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
      throw Error(ErrorCode::invalid_argument, "lambda must be non-negative");
    if (!(target_perplexity() >= 1.0))
      throw Error(ErrorCode::invalid_argument, "perplexity must be at least 1");
    if (max_iters < 0 || convergence_window < 1)
      throw Error(ErrorCode::invalid_argument, "iteration counts must be positive");
    if (!(learning_rate > 0.0))
      throw Error(ErrorCode::invalid_argument, "learning rate must be positive");
    if (neighbor_mode == NeighborMode::fixed_bandwidth && !(neighbor_bandwidth > 0.0))
      throw Error(ErrorCode::invalid_argument, "neighbor bandwidth must be positive");
  }
};

struct ObjectiveValue
{
  double total = 0.0;
  double kl_density = 0.0;
  double kl_neighbor = 0.0;
};

struct EmbeddingResult
{
  LabelId label = 0;
  DensityKind kind = DensityKind::single;
  std::optional<LabelId> other;
  std::optional<SceneId> anchor_scene;
  std::vector<SceneId> instance_ids;
  int dim = 2;
  RowMatrix coords;
  double kl_density = 0.0;
  double kl_neighbor = 0.0;
  int iterations = 0;
  std::uint64_t seed = 0;
  /// (iteration, optimized objective) sampled during optimization.
  std::vector<std::pair<int, double>> trace;
};

// ---------------------------------------------------------------------------

inline RowMatrix pairwise_sq_dists(const RowMatrix& points)
{
  if (points.rows() < 1)
    throw Error(ErrorCode::invalid_argument, "pairwise distances need at least one point");
  if (!points.allFinite())
    throw Error(ErrorCode::invalid_argument, "pairwise distances: non-finite input");
  const auto m = points.rows();
  RowMatrix d = RowMatrix::Zero(m, m);
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = a + 1; b < m; ++b) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < points.cols(); ++k) {
        double diff = points(a, k) - points(b, k);
        acc += diff * diff;
      }
      d(a, b) = acc;
      d(b, a) = acc;
    }
  return d;
}

namespace detail {

inline constexpr int perplexity_max_steps = 64;
inline constexpr double perplexity_log_tol = 1e-7;

/// Conditional Gaussian affinities of one row at precision beta, shifted by
/// the row minimum for range safety. Returns the Shannon entropy (nats).
inline double gaussian_row(std::span<const double> d, Eigen::Index self, double dmin, double beta, std::span<double> out)
{
  double sum = 0.0, weighted = 0.0;
  for (std::size_t b = 0; b < d.size(); ++b) {
    if (static_cast<Eigen::Index>(b) == self) {
      out[b] = 0.0;
      continue;
    }
    double g = d[b] - dmin;
    double e = std::exp(-beta * g);
    out[b] = e;
    sum += e;
    weighted += g * e;
  }
  for (auto& v : out)
    v /= sum;
  return std::log(sum) + beta * weighted / sum;
}

inline NeighborDistribution symmetrize(RowMatrix cond, double perplexity)
{
  const auto m = cond.rows();
  NeighborDistribution out;
  out.m = static_cast<std::size_t>(m);
  out.perplexity = perplexity;
  out.p = (cond + cond.transpose()) / (2.0 * static_cast<double>(m));
  return out;
}

} // namespace detail

/// Conditional affinities p_{b|a}, each row calibrated to `perplexity` by
/// bisection on the Gaussian precision. Rows whose off-diagonal distances are
/// all equal (including all-identical points) are uniform.
inline RowMatrix conditional_neighbors(const RowMatrix& sq_dists, double perplexity)
{
  const auto m = sq_dists.rows();
  if (sq_dists.cols() != m)
    throw Error(ErrorCode::invalid_argument, "distance matrix must be square");
  if (!(perplexity >= 1.0) || static_cast<double>(m) <= perplexity)
    throw Error(ErrorCode::invalid_argument, "perplexity " + std::to_string(perplexity) + " infeasible for " +
                                               std::to_string(m) + " points");
  const double target = std::log(perplexity);
  RowMatrix cond(m, m);
  std::vector<double> row(static_cast<std::size_t>(m));
  for (Eigen::Index a = 0; a < m; ++a) {
    std::span<const double> d(sq_dists.row(a).data(), static_cast<std::size_t>(m));
    double dmin = std::numeric_limits<double>::infinity(), dmax = 0.0, mean = 0.0;
    for (Eigen::Index b = 0; b < m; ++b) {
      if (b == a)
        continue;
      dmin = std::min(dmin, d[static_cast<std::size_t>(b)]);
      dmax = std::max(dmax, d[static_cast<std::size_t>(b)]);
      mean += d[static_cast<std::size_t>(b)];
    }
    mean = mean / static_cast<double>(m - 1) - dmin;

    if (!(dmax > dmin)) {
      for (Eigen::Index b = 0; b < m; ++b)
        cond(a, b) = b == a ? 0.0 : 1.0 / static_cast<double>(m - 1);
      continue;
    }

    double beta = 1.0 / mean, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    for (int step = 0; step < detail::perplexity_max_steps; ++step) {
      double h = detail::gaussian_row(d, a, dmin, beta, row);
      if (std::abs(h - target) < detail::perplexity_log_tol)
        break;
      if (h > target) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (lo + hi);
      } else {
        hi = beta;
        beta = 0.5 * (lo + hi);
      }
    }
    detail::gaussian_row(d, a, dmin, beta, row);
    for (Eigen::Index b = 0; b < m; ++b)
      cond(a, b) = row[static_cast<std::size_t>(b)];
  }
  return cond;
}

/// Symmetrized perplexity-calibrated tSNE affinities.
inline NeighborDistribution neighbor_distribution(const RowMatrix& sq_dists, double perplexity)
{
  return detail::symmetrize(conditional_neighbors(sq_dists, perplexity), perplexity);
}

/// Affinities with one shared Gaussian bandwidth: p_{b|a} ∝ exp(-d_ab / h).
inline NeighborDistribution fixed_bandwidth_neighbors(const RowMatrix& sq_dists, double h)
{
  const auto m = sq_dists.rows();
  if (m < 2)
    throw Error(ErrorCode::invalid_argument, "neighbor distribution needs at least two points");
  RowMatrix cond(m, m);
  std::vector<double> row(static_cast<std::size_t>(m));
  for (Eigen::Index a = 0; a < m; ++a) {
    std::span<const double> d(sq_dists.row(a).data(), static_cast<std::size_t>(m));
    double dmin = std::numeric_limits<double>::infinity();
    for (Eigen::Index b = 0; b < m; ++b)
      if (b != a)
        dmin = std::min(dmin, d[static_cast<std::size_t>(b)]);
    detail::gaussian_row(d, a, dmin, 1.0 / h, row);
    for (Eigen::Index b = 0; b < m; ++b)
      cond(a, b) = row[static_cast<std::size_t>(b)];
  }
  return detail::symmetrize(std::move(cond), 0.0);
}

/// Q_d: normalized exponential-kernel KDE of the embedding (bandwidth 1,
/// self-term included).
inline std::vector<double> low_dim_density(const RowMatrix& coords)
{
  if (!coords.allFinite())
    throw Error(ErrorCode::invalid_argument, "low-dimensional density: non-finite coordinates");
  const auto m = coords.rows();
  std::vector<double> q(static_cast<std::size_t>(m), 0.0);
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b < m; ++b)
      q[static_cast<std::size_t>(a)] += std::exp(-(coords.row(a) - coords.row(b)).squaredNorm() / EmbedConfig::q_bandwidth);
  double z = 0.0;
  for (double v : q)
    z += v;
  for (auto& v : q)
    v /= z;
  return q;
}

/// Q_n: Student-t affinities q_ab ∝ 1 / (1 + |x_a - x_b|^2), zero diagonal.
inline RowMatrix student_t_q(const RowMatrix& coords)
{
  const auto m = coords.rows();
  RowMatrix q = RowMatrix::Zero(m, m);
  if (m < 2)
    return q;
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b < m; ++b)
      if (a != b)
        q(a, b) = 1.0 / (1.0 + (coords.row(a) - coords.row(b)).squaredNorm());
  return q / q.sum();
}

namespace detail {

struct ObjectiveWeights
{
  double density = 1.0;
  double neighbor = 0.1;
};

/// Evaluates KL(P_d||Q_d) and KL(P_n||Q_n) and their gradient in two passes
/// over the packed upper triangle, one contiguous row segment at a time.
/// Summation order is fixed, so results are bit-reproducible.
class Evaluator
{
  using Array = Eigen::ArrayXd;
  using Map = Eigen::Map<Array>;
  using ConstMap = Eigen::Map<const Array>;

public:
  Evaluator(std::span<const double> pd, const NeighborDistribution& pn, int dim)
    : m_(pn.m)
    , dim_(dim)
    , pd_(static_cast<Eigen::Index>(pd.size()))
  {
    if (pd.size() != m_)
      throw Error(ErrorCode::invalid_argument, "density and neighbor distribution sizes differ");
    const auto pairs = m_ * (m_ - 1) / 2;
    p_.resize(static_cast<Eigen::Index>(pairs));
    e_.resize(static_cast<Eigen::Index>(pairs));
    w_.resize(static_cast<Eigen::Index>(pairs));
    u_.resize(static_cast<Eigen::Index>(m_));
    d2_.resize(static_cast<Eigen::Index>(m_));
    coef_.resize(static_cast<Eigen::Index>(m_));
    for (auto& c : xs_)
      c.resize(static_cast<Eigen::Index>(m_));
    for (auto& c : gs_)
      c.resize(static_cast<Eigen::Index>(m_));
    Eigen::Index k = 0;
    for (std::size_t a = 0; a < m_; ++a)
      for (std::size_t b = a + 1; b < m_; ++b, ++k) {
        double p = pn.p(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
        if (p < min_affinity)
          p = 0.0;
        p_[k] = p;
        if (p > 0.0)
          plogp_ += 2.0 * p * std::log(p);
      }
    for (std::size_t a = 0; a < m_; ++a) {
      pd_[static_cast<Eigen::Index>(a)] = pd[a];
      if (pd[a] > 0.0)
        pdlogpd_ += pd[a] * std::log(pd[a]);
    }
  }

  std::size_t size() const { return m_; }

  /// `x` and `grad` are row-major m x dim. `grad` may be null.
  ObjectiveValue evaluate(const double* x, double* grad, ObjectiveWeights w, double exaggeration, bool want_objective)
  {
    const auto m = static_cast<Eigen::Index>(m_);
    for (Eigen::Index a = 0; a < m; ++a)
      for (int c = 0; c < dim_; ++c)
        xs_[static_cast<std::size_t>(c)][a] = x[a * dim_ + c];

    const bool need_e = w.density != 0.0 || want_objective;
    u_.setOnes();
    double sum_w = 0.0, p_log1p = 0.0;
    Eigen::Index k = 0;
    for (Eigen::Index a = 0; a + 1 < m; ++a) {
      const Eigen::Index len = m - a - 1;
      auto d2 = d2_.head(len);
      d2 = (xs_[0].segment(a + 1, len) - xs_[0][a]).square();
      if (dim_ == 2)
        d2 += (xs_[1].segment(a + 1, len) - xs_[1][a]).square();
      auto wk = w_.segment(k, len);
      wk = (1.0 + d2).inverse();
      sum_w += wk.sum();
      if (need_e) {
        auto ek = e_.segment(k, len);
        // Kernel floored at exp(-600) (~1e-261): keeps every product in the
        // gradient out of the denormal range.
        ek = (-d2.min(kernel_floor_arg)).exp();
        u_[a] += ek.sum();
        u_.segment(a + 1, len) += ek;
      }
      if (want_objective)
        p_log1p += (p_.segment(k, len) * (1.0 + d2).log()).sum();
      k += len;
    }
    const double zn = 2.0 * sum_w;
    const double zd = u_.sum();

    ObjectiveValue val;
    if (want_objective) {
      double kld = pdlogpd_ + std::log(zd) - (pd_ * u_.log()).sum();
      val.kl_density = std::max(kld, 0.0);
      val.kl_neighbor = std::max(plogp_ + 2.0 * p_log1p + std::log(zn), 0.0);
      val.total = w.density * val.kl_density + w.neighbor * val.kl_neighbor;
    }

    if (grad) {
      for (int c = 0; c < dim_; ++c)
        gs_[static_cast<std::size_t>(c)].setZero();
      auto& r = u_;
      r = pd_ / u_;
      const double c0 = 2.0 / zd;
      const double inv_zn = 1.0 / zn;
      const double gd = 2.0 * w.density, gn = 4.0 * w.neighbor;
      k = 0;
      for (Eigen::Index a = 0; a + 1 < m; ++a) {
        const Eigen::Index len = m - a - 1;
        auto wk = w_.segment(k, len);
        auto coef = coef_.head(len);
        coef = gn * (exaggeration * p_.segment(k, len) - wk * inv_zn) * wk;
        if (w.density != 0.0)
          coef += gd * e_.segment(k, len) * ((r[a] - c0) + r.segment(a + 1, len));
        for (int c = 0; c < dim_; ++c) {
          auto& xc = xs_[static_cast<std::size_t>(c)];
          auto& gc = gs_[static_cast<std::size_t>(c)];
          // d2_ doubles as scratch for the per-pair force.
          auto f = d2_.head(len);
          f = coef * (xc[a] - xc.segment(a + 1, len));
          gc[a] += f.sum();
          gc.segment(a + 1, len) -= f;
        }
        k += len;
      }
      for (Eigen::Index a = 0; a < m; ++a)
        for (int c = 0; c < dim_; ++c)
          grad[a * dim_ + c] = gs_[static_cast<std::size_t>(c)][a];
    }
    return val;
  }

private:
  static constexpr double kernel_floor_arg = 600.0;
  static constexpr double min_affinity = 1e-200;

  std::size_t m_;
  int dim_;
  Array pd_;
  Array p_, e_, w_, u_, d2_, coef_;
  std::array<Array, 2> xs_, gs_;
  double plogp_ = 0.0;
  double pdlogpd_ = 0.0;
};

inline void check_shapes(const RowMatrix& coords, std::span<const double> pd, const NeighborDistribution& pn)
{
  if (coords.cols() != 1 && coords.cols() != 2)
    throw Error(ErrorCode::invalid_argument, "coordinates must be 1D or 2D");
  if (static_cast<std::size_t>(coords.rows()) != pd.size() || pd.size() != pn.m)
    throw Error(ErrorCode::invalid_argument, "coordinate, density and neighbor sizes differ");
}

} // namespace detail

/// KL(P_d||Q_d) + lambda * KL(P_n||Q_n) at `coords`.
inline ObjectiveValue objective(const RowMatrix& coords,
                                std::span<const double> pd,
                                const NeighborDistribution& pn,
                                double lambda)
{
  detail::check_shapes(coords, pd, pn);
  detail::Evaluator ev(pd, pn, static_cast<int>(coords.cols()));
  return ev.evaluate(coords.data(), nullptr, {1.0, lambda}, 1.0, true);
}

/// Analytic gradient of `objective` with respect to the coordinates.
inline RowMatrix gradient(const RowMatrix& coords,
                          std::span<const double> pd,
                          const NeighborDistribution& pn,
                          double lambda)
{
  detail::check_shapes(coords, pd, pn);
  detail::Evaluator ev(pd, pn, static_cast<int>(coords.cols()));
  RowMatrix g(coords.rows(), coords.cols());
  ev.evaluate(coords.data(), g.data(), {1.0, lambda}, 1.0, false);
  return g;
}

/// Perplexity actually used for `m` points: the configured value, capped at
/// (m - 1) / 3 (but not below 1) so small sets stay feasible.
inline double effective_perplexity(const EmbedConfig& cfg, std::size_t m)
{
  double cap = std::max(1.0, static_cast<double>(m - 1) / 3.0);
  return std::min(cfg.target_perplexity(), cap);
}

inline NeighborDistribution build_neighbors(const RowMatrix& features, const EmbedConfig& cfg)
{
  auto d = pairwise_sq_dists(features);
  if (cfg.neighbor_mode == NeighborMode::fixed_bandwidth)
    return fixed_bandwidth_neighbors(d, cfg.neighbor_bandwidth);
  return neighbor_distribution(d, effective_perplexity(cfg, static_cast<std::size_t>(features.rows())));
}

namespace detail {

inline RowMatrix initial_coords(std::size_t m, const EmbedConfig& cfg)
{
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix x(static_cast<Eigen::Index>(m), cfg.dim);
  for (Eigen::Index a = 0; a < x.rows(); ++a)
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      x(a, c) = cfg.init_scale * normal(rng);
  return x;
}

inline EmbeddingResult run_descent(const DensityVector& target,
                                   const NeighborDistribution& pn,
                                   const EmbedConfig& cfg,
                                   ObjectiveWeights weights,
                                   std::optional<RowMatrix> init)
{
  cfg.validate();
  const auto m = target.values.size();
  EmbeddingResult res;
  res.label = target.label;
  res.kind = target.kind;
  res.other = target.other;
  res.anchor_scene = target.anchor_scene;
  res.instance_ids = target.instance_ids;
  res.dim = cfg.dim;
  res.seed = cfg.seed;

  if (m == 1) {
    res.coords = RowMatrix::Zero(1, cfg.dim);
    return res;
  }
  if (pn.m != m)
    throw Error(ErrorCode::invalid_argument, "neighbor distribution does not match the density support");

  RowMatrix x;
  if (init) {
    if (init->rows() != static_cast<Eigen::Index>(m) || init->cols() != cfg.dim || !init->allFinite())
      throw Error(ErrorCode::invalid_argument, "initial coordinates have the wrong shape");
    x = *init;
  } else {
    x = initial_coords(m, cfg);
  }

  Evaluator ev(target.values, pn, cfg.dim);
  RowMatrix grad(x.rows(), x.cols());
  RowMatrix update = RowMatrix::Zero(x.rows(), x.cols());
  RowMatrix gains = RowMatrix::Ones(x.rows(), x.cols());
  const int sample_every = 10;
  const int check_from = std::max(cfg.exaggeration_iters, cfg.momentum_switch_iter) + cfg.convergence_window;
  const int lag = cfg.convergence_window / sample_every;

  int it = 0;
  for (; it < cfg.max_iters; ++it) {
    double alpha = it < cfg.exaggeration_iters ? cfg.exaggeration : 1.0;
    bool sample = it % sample_every == 0;
    auto val = ev.evaluate(x.data(), grad.data(), weights, alpha, sample);
    if (sample) {
      if (!std::isfinite(val.total))
        throw Error(ErrorCode::numeric, "objective became non-finite at iteration " + std::to_string(it));
      res.trace.emplace_back(it, val.total);
      if (it >= check_from && static_cast<int>(res.trace.size()) > lag) {
        double before = res.trace[res.trace.size() - 1 - static_cast<std::size_t>(lag)].second;
        double gain = before - val.total;
        if (gain <= cfg.convergence_tol * std::max(std::abs(before), std::numeric_limits<double>::min()))
          break;
      }
    }
    if (!grad.allFinite())
      throw Error(ErrorCode::numeric, "gradient became non-finite at iteration " + std::to_string(it));

    double momentum = it < cfg.momentum_switch_iter ? cfg.initial_momentum : cfg.final_momentum;
    for (Eigen::Index a = 0; a < x.rows(); ++a)
      for (Eigen::Index c = 0; c < x.cols(); ++c) {
        double g = grad(a, c);
        double& gain = gains(a, c);
        gain = (g > 0.0) != (update(a, c) > 0.0) ? gain + 0.2 : std::max(gain * 0.8, 0.01);
        update(a, c) = momentum * update(a, c) - cfg.learning_rate * gain * g;
        x(a, c) += update(a, c);
      }
    Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;
  }

  auto final_val = ev.evaluate(x.data(), nullptr, weights, 1.0, true);
  if (!std::isfinite(final_val.total) || !x.allFinite())
    throw Error(ErrorCode::numeric, "objective became non-finite at iteration " + std::to_string(it));
  res.coords = std::move(x);
  res.kl_density = final_val.kl_density;
  res.kl_neighbor = final_val.kl_neighbor;
  res.iterations = it;
  return res;
}

} // namespace detail

/// Density-preserving embedding of `target` with neighbor affinities `pn`
/// already built from the instance features.
inline EmbeddingResult optimize(const DensityVector& target,
                                const NeighborDistribution& pn,
                                const EmbedConfig& cfg,
                                std::optional<RowMatrix> init = std::nullopt)
{
  return detail::run_descent(target, pn, cfg, {1.0, cfg.lambda}, std::move(init));
}

/// Density-preserving embedding: minimizes KL(P_d||Q_d) + lambda KL(P_n||Q_n),
/// with P_n built from `features` (one row per instance of `target`).
inline EmbeddingResult optimize(const DensityVector& target, const RowMatrix& features, const EmbedConfig& cfg)
{
  cfg.validate();
  if (static_cast<std::size_t>(features.rows()) != target.values.size())
    throw Error(ErrorCode::invalid_argument, "feature rows do not match the density support");
  if (features.rows() == 1)
    return detail::run_descent(target, NeighborDistribution{1, RowMatrix::Zero(1, 1), 0.0}, cfg, {}, std::nullopt);
  return optimize(target, build_neighbors(features, cfg), cfg);
}

/// Exact tSNE on the same P_n (KL(P_n||Q_n) only). `reference` supplies the
/// instance ids and the density whose KL is reported for comparison.
inline EmbeddingResult tsne_embed(const DensityVector& reference, const NeighborDistribution& pn, const EmbedConfig& cfg)
{
  return detail::run_descent(reference, pn, cfg, {0.0, 1.0}, std::nullopt);
}

inline EmbeddingResult tsne_embed(const DensityVector& reference, const RowMatrix& features, const EmbedConfig& cfg)
{
  cfg.validate();
  if (static_cast<std::size_t>(features.rows()) != reference.values.size())
    throw Error(ErrorCode::invalid_argument, "feature rows do not match the density support");
  if (features.rows() == 1)
    return detail::run_descent(reference, NeighborDistribution{1, RowMatrix::Zero(1, 1), 0.0}, cfg, {0.0, 1.0}, std::nullopt);
  return tsne_embed(reference, build_neighbors(features, cfg), cfg);
}

/// Features of the instances a density is supported on.
inline RowMatrix support_features(const Dataset& ds, const DensityVector& density)
{
  return instance_features(ds, density.label, density.instance_ids);
}

} // namespace odex
