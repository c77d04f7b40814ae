#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "odex/dataset.hpp"

namespace odex {

/// KDE bandwidth in squared-distance units of feature space.
class Bandwidth
{
public:
  explicit Bandwidth(double h)
    : h_(h)
  {
    if (!(h > 0.0) || !std::isfinite(h))
      throw Error(ErrorCode::invalid_argument, "bandwidth must be positive and finite");
  }

  double value() const { return h_; }

private:
  double h_;
};

inline constexpr double default_bandwidth = 40.0;

enum class DensityKind
{
  single,
  marginal,
  conditional,
  subset
};

/// Normalized distribution over the instances of one label.
struct DensityVector
{
  LabelId label = 0;
  DensityKind kind = DensityKind::single;
  /// marginalized label for `marginal`, anchor for `conditional`.
  std::optional<LabelId> other;
  std::optional<SceneId> anchor_scene;
  std::vector<SceneId> instance_ids;
  std::vector<double> values;
};

struct JointDensity
{
  LabelId row_label = 0;
  LabelId col_label = 0;
  std::vector<SceneId> row_ids;
  std::vector<SceneId> col_ids;
  RowMatrix values;
};

struct PmiEntry
{
  LabelId label = 0;
  std::vector<SceneId> instance_ids;
  std::vector<double> values;
};

struct PmiMap
{
  Instance anchor;
  std::vector<PmiEntry> entries;
  /// Prompt labels skipped, with the reason ("no co-occurrence", "anchor label").
  std::vector<std::pair<LabelId, std::string>> unavailable;
};

/// How the conditional density divides the joint.
enum class ConditionalForm
{
  /// joint(i, j) / marginal of the target, P_d(z_i,s ; t).
  as_written,
  /// joint(i, j) / marginal of the anchor, P_d(z_j,t ; s).
  standard
};

/// Exponential kernel k(z) = exp(-z), z >= 0.
inline double kernel(double z)
{
  if (!(z >= 0.0))
    throw Error(ErrorCode::invalid_argument, "kernel argument must be non-negative");
  return std::exp(-z);
}

inline double squared_distance(std::span<const float> a, std::span<const float> b)
{
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
    acc += d * d;
  }
  return acc;
}

namespace detail {

/// K(r, c) = k(|z_{rows[r]} - z_{cols[c]}|^2 / h) for one label.
inline RowMatrix kernel_block(const Dataset& ds,
                              LabelId label,
                              std::span<const SceneId> rows,
                              std::span<const SceneId> cols,
                              Bandwidth h)
{
  const double inv_h = 1.0 / h.value();
  std::vector<std::span<const float>> cz;
  cz.reserve(cols.size());
  for (auto c : cols)
    cz.push_back(ds.feature({label, c}));
  RowMatrix k(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto zr = ds.feature({label, rows[r]});
    for (std::size_t c = 0; c < cols.size(); ++c)
      k(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
        std::exp(-squared_distance(zr, cz[c]) * inv_h);
  }
  return k;
}

inline std::vector<SceneId> intersect(std::span<const SceneId> a, std::span<const SceneId> b)
{
  std::vector<SceneId> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline void normalize(std::vector<double>& v, const char* what)
{
  double total = 0.0;
  for (double x : v)
    total += x;
  if (!(total > 0.0) || !std::isfinite(total))
    throw Error(ErrorCode::numeric, std::string(what) + ": density underflowed to zero");
  for (auto& x : v) {
    x /= total;
    if (!(x > 0.0))
      throw Error(ErrorCode::numeric, std::string(what) + ": density underflowed to zero at an instance");
  }
}

inline void require_instance(const Dataset& ds, Instance inst)
{
  ds.label(inst.label);
  if (!ds.has_instance(inst))
    throw Error(ErrorCode::not_an_instance, "label '" + ds.label(inst.label).name + "' is not detected in scene " +
                                              std::to_string(inst.scene));
}

/// O_s ∩ O_t, rejecting s == t and empty intersections.
inline std::vector<SceneId> cooccurrence(const Dataset& ds, LabelId s, LabelId t)
{
  if (s == t)
    throw Error(ErrorCode::same_label, "joint densities need two distinct labels, got '" + ds.label(s).name + "' twice");
  auto both = intersect(ds.occurrences(s), ds.occurrences(t));
  if (both.empty())
    throw Error(ErrorCode::no_cooccurrence,
                "objects '" + ds.label(s).name + "' and '" + ds.label(t).name + "' never co-occur");
  return both;
}

inline std::vector<double> row_sums(const RowMatrix& k)
{
  std::vector<double> out(static_cast<std::size_t>(k.rows()));
  for (Eigen::Index r = 0; r < k.rows(); ++r) {
    double acc = 0.0;
    for (Eigen::Index c = 0; c < k.cols(); ++c)
      acc += k(r, c);
    out[static_cast<std::size_t>(r)] = acc;
  }
  return out;
}

inline std::vector<double> col_sums(const RowMatrix& k)
{
  std::vector<double> out(static_cast<std::size_t>(k.cols()), 0.0);
  for (Eigen::Index r = 0; r < k.rows(); ++r)
    for (Eigen::Index c = 0; c < k.cols(); ++c)
      out[static_cast<std::size_t>(c)] += k(r, c);
  return out;
}

inline std::size_t position(std::span<const SceneId> sorted, SceneId scene)
{
  return static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), scene) - sorted.begin());
}

/// Pieces of the joint KDE for labels (s, t) over co-occurrence set C:
/// joint~(i, j) = sum_{n in C} ks(i, n) kt(j, n).
struct JointFactors
{
  std::vector<SceneId> both;
  RowMatrix ks; // |O_s| x |C|
  RowMatrix kt; // |O_t| x |C|

  JointFactors(const Dataset& ds, LabelId s, LabelId t, Bandwidth h)
    : both(cooccurrence(ds, s, t))
    , ks(kernel_block(ds, s, ds.occurrences(s), both, h))
    , kt(kernel_block(ds, t, ds.occurrences(t), both, h))
  {
  }

  /// Grand sum of the unnormalized joint: sum_n (sum_i ks(i,n)) (sum_j kt(j,n)).
  double total() const
  {
    auto cs = col_sums(ks);
    auto ct = col_sums(kt);
    double z = 0.0;
    for (std::size_t n = 0; n < cs.size(); ++n)
      z += cs[n] * ct[n];
    return z;
  }

  /// Unnormalized joint against one t instance (row `j` of kt), for every s instance.
  std::vector<double> column(Eigen::Index j) const
  {
    std::vector<double> out(static_cast<std::size_t>(ks.rows()));
    for (Eigen::Index i = 0; i < ks.rows(); ++i) {
      double acc = 0.0;
      for (Eigen::Index n = 0; n < ks.cols(); ++n)
        acc += ks(i, n) * kt(j, n);
      out[static_cast<std::size_t>(i)] = acc;
    }
    return out;
  }

  /// sum over t instances in co-occurring scenes of the unnormalized joint.
  std::vector<double> marginal_unnormalized(const Dataset& ds, LabelId t) const
  {
    auto occ_t = ds.occurrences(t);
    std::vector<double> w(both.size(), 0.0);
    for (SceneId j : both) {
      auto row = static_cast<Eigen::Index>(position(occ_t, j));
      for (std::size_t n = 0; n < both.size(); ++n)
        w[n] += kt(row, static_cast<Eigen::Index>(n));
    }
    std::vector<double> out(static_cast<std::size_t>(ks.rows()));
    for (Eigen::Index i = 0; i < ks.rows(); ++i) {
      double acc = 0.0;
      for (std::size_t n = 0; n < both.size(); ++n)
        acc += ks(i, static_cast<Eigen::Index>(n)) * w[n];
      out[static_cast<std::size_t>(i)] = acc;
    }
    return out;
  }
};

} // namespace detail

/// Unnormalized KDE of label s at instance i: sum over n in O_s of
/// k(|z_i - z_n|^2 / h), self-term included.
inline double kde_unnormalized(const Dataset& ds, LabelId s, SceneId i, Bandwidth h)
{
  detail::require_instance(ds, {s, i});
  auto zi = ds.feature({s, i});
  double acc = 0.0;
  for (SceneId n : ds.occurrences(s))
    acc += std::exp(-squared_distance(zi, ds.feature({s, n})) / h.value());
  return acc;
}

inline DensityVector single_density(const Dataset& ds, LabelId s, Bandwidth h)
{
  auto occ = ds.occurrences(s);
  auto k = detail::kernel_block(ds, s, occ, occ, h);
  DensityVector out;
  out.label = s;
  out.kind = DensityKind::single;
  out.instance_ids.assign(occ.begin(), occ.end());
  out.values = detail::row_sums(k);
  detail::normalize(out.values, "single density");
  return out;
}

/// KDE restricted to the scenes in `subset` (any order, duplicates ignored).
inline DensityVector subset_density(const Dataset& ds, LabelId s, std::span<const SceneId> subset, Bandwidth h)
{
  std::vector<SceneId> b(subset.begin(), subset.end());
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  auto members = detail::intersect(ds.occurrences(s), b);
  if (members.empty())
    throw Error(ErrorCode::empty_subset, "selection contains no instance of '" + ds.label(s).name + "'");
  auto k = detail::kernel_block(ds, s, members, members, h);
  DensityVector out;
  out.label = s;
  out.kind = DensityKind::subset;
  out.instance_ids = std::move(members);
  out.values = detail::row_sums(k);
  detail::normalize(out.values, "subset density");
  return out;
}

/// Normalized joint KDE over all pairs (i in O_s, j in O_t).
inline JointDensity joint_density(const Dataset& ds, LabelId s, LabelId t, Bandwidth h)
{
  detail::JointFactors f(ds, s, t, h);
  JointDensity out;
  out.row_label = s;
  out.col_label = t;
  auto os = ds.occurrences(s);
  auto ot = ds.occurrences(t);
  out.row_ids.assign(os.begin(), os.end());
  out.col_ids.assign(ot.begin(), ot.end());
  out.values = f.ks * f.kt.transpose();
  double z = out.values.sum();
  if (!(z > 0.0))
    throw Error(ErrorCode::numeric, "joint density underflowed to zero");
  out.values /= z;
  return out;
}

/// P_d(z_i,s ; t): the joint summed over t instances of co-occurring scenes,
/// supported on all of O_s and renormalized.
inline DensityVector marginal_density(const Dataset& ds, LabelId s, LabelId t, Bandwidth h)
{
  detail::JointFactors f(ds, s, t, h);
  DensityVector out;
  out.label = s;
  out.kind = DensityKind::marginal;
  out.other = t;
  auto os = ds.occurrences(s);
  out.instance_ids.assign(os.begin(), os.end());
  out.values = f.marginal_unnormalized(ds, t);
  detail::normalize(out.values, "marginal density");
  return out;
}

/// Density of label s conditioned on the instance `anchor` of another label,
/// renormalized over O_s.
inline DensityVector conditional_density(const Dataset& ds,
                                         LabelId s,
                                         Instance anchor,
                                         Bandwidth h,
                                         ConditionalForm form = ConditionalForm::as_written)
{
  detail::require_instance(ds, anchor);
  detail::JointFactors f(ds, s, anchor.label, h);
  auto j = static_cast<Eigen::Index>(detail::position(ds.occurrences(anchor.label), anchor.scene));
  auto joint = f.column(j);

  DensityVector out;
  out.label = s;
  out.kind = DensityKind::conditional;
  out.other = anchor.label;
  out.anchor_scene = anchor.scene;
  auto os = ds.occurrences(s);
  out.instance_ids.assign(os.begin(), os.end());
  out.values = std::move(joint);
  if (form == ConditionalForm::as_written) {
    auto marg = f.marginal_unnormalized(ds, anchor.label);
    for (std::size_t i = 0; i < out.values.size(); ++i) {
      if (!(marg[i] > 0.0))
        throw Error(ErrorCode::numeric, "conditional density: marginal underflowed to zero");
      out.values[i] /= marg[i];
    }
  }
  // The standard form divides by a constant in i, which renormalization removes.
  detail::normalize(out.values, "conditional density");
  return out;
}

namespace detail {

inline double log_checked(double v, const char* what)
{
  if (!(v > 0.0))
    throw Error(ErrorCode::numeric, std::string(what) + " underflowed to zero");
  return std::log(v);
}

} // namespace detail

/// Pointwise mutual information log P(i,j) - log P_s(i) - log P_t(j), using
/// normalized joint and single densities.
inline double pmi(const Dataset& ds, Instance a, Instance b, Bandwidth h)
{
  detail::require_instance(ds, a);
  detail::require_instance(ds, b);
  detail::JointFactors f(ds, a.label, b.label, h);
  auto os = ds.occurrences(a.label);
  auto ot = ds.occurrences(b.label);
  auto ia = static_cast<Eigen::Index>(detail::position(os, a.scene));
  auto jb = static_cast<Eigen::Index>(detail::position(ot, b.scene));
  double joint = f.ks.row(ia).dot(f.kt.row(jb)) / f.total();
  auto ps = single_density(ds, a.label, h);
  auto pt = single_density(ds, b.label, h);
  return detail::log_checked(joint, "joint density") -
         (std::log(ps.values[static_cast<std::size_t>(ia)]) + std::log(pt.values[static_cast<std::size_t>(jb)]));
}

/// PMI of every instance of every prompt label against `anchor`.
inline PmiMap pmi_map(const Dataset& ds, Instance anchor, Bandwidth h)
{
  detail::require_instance(ds, anchor);
  PmiMap out;
  out.anchor = anchor;
  auto pt = single_density(ds, anchor.label, h);
  auto jb = static_cast<Eigen::Index>(detail::position(ds.occurrences(anchor.label), anchor.scene));
  double log_pt = std::log(pt.values[static_cast<std::size_t>(jb)]);

  for (const auto& lab : ds.labels()) {
    if (lab.origin != Origin::prompt)
      continue;
    if (lab.label_id == anchor.label) {
      out.unavailable.emplace_back(lab.label_id, "anchor label");
      continue;
    }
    if (detail::intersect(ds.occurrences(lab.label_id), ds.occurrences(anchor.label)).empty()) {
      out.unavailable.emplace_back(lab.label_id, "no co-occurrence");
      continue;
    }
    detail::JointFactors f(ds, lab.label_id, anchor.label, h);
    double log_z = std::log(f.total());
    auto joint = f.column(jb);
    auto ps = single_density(ds, lab.label_id, h);
    PmiEntry e;
    e.label = lab.label_id;
    e.instance_ids = ps.instance_ids;
    e.values.resize(joint.size());
    for (std::size_t i = 0; i < joint.size(); ++i)
      e.values[i] = (detail::log_checked(joint[i], "joint density") - log_z) - (std::log(ps.values[i]) + log_pt);
    out.entries.push_back(std::move(e));
  }
  return out;
}

} // namespace odex
