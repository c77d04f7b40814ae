#pragma once

// Shared fixtures and naive reference implementations. The oracles here work
// directly from raw feature rows with plain nested loops and never call the
// library's density or embedding code.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "odex/dataset.hpp"

namespace odex::testing {

class TempDir
{
public:
  explicit TempDir(const std::string& tag = "odex")
  {
    static std::atomic<int> counter{0};
    auto base = std::filesystem::temp_directory_path();
    path_ = base / (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir()
  {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

struct RandomSpec
{
  int scenes = 8;
  int labels = 3;
  int feature_dim = 3;
  double presence = 0.7;
  double scale = 4.0;
};

/// Random dataset; label 0 is a prompt label present in every scene and every
/// label is detected at least once.
inline Dataset random_dataset(std::mt19937_64& rng, const RandomSpec& spec)
{
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, spec.scale);
  std::vector<SceneRecord> scenes;
  for (int n = 0; n < spec.scenes; ++n)
    scenes.push_back({n, std::nullopt, std::nullopt});
  std::vector<ObjectLabel> labels;
  for (int l = 0; l < spec.labels; ++l)
    labels.push_back({l, "obj" + std::to_string(l), l % 2 == 0 ? Origin::prompt : Origin::discovered});
  std::vector<Detection> dets;
  std::vector<float> feats;
  for (int l = 0; l < spec.labels; ++l) {
    std::vector<int> present;
    for (int n = 0; n < spec.scenes; ++n)
      if (l == 0 || unit(rng) < spec.presence)
        present.push_back(n);
    if (present.empty())
      present.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(spec.scenes)));
    for (int n : present) {
      dets.push_back({n, l, dets.size(), std::nullopt});
      for (int f = 0; f < spec.feature_dim; ++f)
        feats.push_back(static_cast<float>(normal(rng)));
    }
  }
  return Dataset("random", spec.feature_dim, std::move(scenes), std::move(labels), std::move(dets), std::move(feats));
}

/// Two labels in every scene: "s" with the given features and "t" with one
/// constant feature vector, so joints factorize.
inline Dataset degenerate_dataset(const std::vector<std::vector<float>>& s_features)
{
  const int n_scenes = static_cast<int>(s_features.size());
  const int f = static_cast<int>(s_features.front().size());
  std::vector<SceneRecord> scenes;
  std::vector<Detection> dets;
  std::vector<float> feats;
  for (int n = 0; n < n_scenes; ++n) {
    scenes.push_back({n, std::nullopt, std::nullopt});
    dets.push_back({n, 0, dets.size(), std::nullopt});
    feats.insert(feats.end(), s_features[static_cast<std::size_t>(n)].begin(), s_features[static_cast<std::size_t>(n)].end());
  }
  for (int n = 0; n < n_scenes; ++n) {
    dets.push_back({n, 1, dets.size(), std::nullopt});
    for (int c = 0; c < f; ++c)
      feats.push_back(1.5f);
  }
  std::vector<ObjectLabel> labels{{0, "s", Origin::prompt}, {1, "t", Origin::discovered}};
  return Dataset("degenerate", f, std::move(scenes), std::move(labels), std::move(dets), std::move(feats));
}

inline double rel_err(double a, double b)
{
  double d = std::abs(a - b);
  double m = std::max(std::abs(a), std::abs(b));
  return m == 0.0 ? 0.0 : d / m;
}

inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& b)
{
  if (a.size() != b.size())
    return INFINITY;
  double e = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    e = std::max(e, rel_err(a[k], b[k]));
  return e;
}

inline double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

/// Spearman rank correlation (average ranks for ties).
inline double spearman(const std::vector<double>& a, const std::vector<double>& b)
{
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto x, auto y) { return v[x] < v[y]; });
    std::vector<double> r(v.size());
    for (std::size_t k = 0; k < idx.size();) {
      std::size_t e = k;
      while (e + 1 < idx.size() && v[idx[e + 1]] == v[idx[k]])
        ++e;
      for (std::size_t q = k; q <= e; ++q)
        r[idx[q]] = 0.5 * static_cast<double>(k + e) + 1.0;
      k = e + 1;
    }
    return r;
  };
  auto ra = ranks(a), rb = ranks(b);
  double ma = sum(ra) / static_cast<double>(ra.size()), mb = sum(rb) / static_cast<double>(rb.size());
  double num = 0, da = 0, db = 0;
  for (std::size_t k = 0; k < ra.size(); ++k) {
    num += (ra[k] - ma) * (rb[k] - mb);
    da += (ra[k] - ma) * (ra[k] - ma);
    db += (rb[k] - mb) * (rb[k] - mb);
  }
  return num / std::sqrt(da * db);
}

namespace naive {

inline std::vector<int> occ(const Dataset& ds, int label)
{
  std::vector<int> out;
  for (const auto& d : ds.detections())
    if (d.label_id == label)
      out.push_back(d.scene_id);
  std::sort(out.begin(), out.end());
  return out;
}

inline bool contains(const std::vector<int>& v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); }

inline const float* feat(const Dataset& ds, int label, int scene)
{
  for (const auto& d : ds.detections())
    if (d.label_id == label && d.scene_id == scene)
      return ds.features().data() + d.feature_row * static_cast<std::size_t>(ds.feature_dim());
  return nullptr;
}

inline double k(const Dataset& ds, int label, int a, int b, double h)
{
  const float* x = feat(ds, label, a);
  const float* y = feat(ds, label, b);
  double d = 0.0;
  for (int f = 0; f < ds.feature_dim(); ++f) {
    double diff = static_cast<double>(x[f]) - static_cast<double>(y[f]);
    d += diff * diff;
  }
  return std::exp(-d / h);
}

inline std::vector<double> normalized(std::vector<double> v)
{
  double z = sum(v);
  for (auto& x : v)
    x /= z;
  return v;
}

inline std::vector<double> single(const Dataset& ds, int s, double h, const std::vector<int>* subset = nullptr)
{
  std::vector<int> support;
  for (int i : occ(ds, s))
    if (!subset || contains(*subset, i))
      support.push_back(i);
  std::vector<double> v;
  for (int i : support) {
    double acc = 0.0;
    for (int n : support)
      acc += k(ds, s, i, n, h);
    v.push_back(acc);
  }
  return normalized(v);
}

/// Normalized joint over O_s x O_t, row-major.
inline std::vector<std::vector<double>> joint(const Dataset& ds, int s, int t, double h)
{
  auto os = occ(ds, s), ot = occ(ds, t);
  std::vector<std::vector<double>> j(os.size(), std::vector<double>(ot.size(), 0.0));
  double total = 0.0;
  for (std::size_t a = 0; a < os.size(); ++a)
    for (std::size_t b = 0; b < ot.size(); ++b) {
      double acc = 0.0;
      for (int n : os)
        if (contains(ot, n))
          acc += k(ds, s, os[a], n, h) * k(ds, t, ot[b], n, h);
      j[a][b] = acc;
      total += acc;
    }
  for (auto& row : j)
    for (auto& x : row)
      x /= total;
  return j;
}

inline std::vector<double> marginal(const Dataset& ds, int s, int t, double h)
{
  auto j = joint(ds, s, t, h);
  auto os = occ(ds, s), ot = occ(ds, t);
  std::vector<double> v(os.size(), 0.0);
  for (std::size_t a = 0; a < os.size(); ++a)
    for (std::size_t b = 0; b < ot.size(); ++b)
      if (contains(os, ot[b]))
        v[a] += j[a][b];
  return normalized(v);
}

/// P(i, j) / P(i; t), renormalized over O_s.
inline std::vector<double> conditional(const Dataset& ds, int s, int t, int scene, double h)
{
  auto j = joint(ds, s, t, h);
  auto os = occ(ds, s), ot = occ(ds, t);
  auto col = static_cast<std::size_t>(std::find(ot.begin(), ot.end(), scene) - ot.begin());
  std::vector<double> marg(os.size(), 0.0);
  for (std::size_t a = 0; a < os.size(); ++a)
    for (std::size_t b = 0; b < ot.size(); ++b)
      if (contains(os, ot[b]))
        marg[a] += j[a][b];
  std::vector<double> v(os.size());
  for (std::size_t a = 0; a < os.size(); ++a)
    v[a] = j[a][col] / marg[a];
  return normalized(v);
}

inline double pmi(const Dataset& ds, int s, int i, int t, int jscene, double h)
{
  auto j = joint(ds, s, t, h);
  auto os = occ(ds, s), ot = occ(ds, t);
  auto a = static_cast<std::size_t>(std::find(os.begin(), os.end(), i) - os.begin());
  auto b = static_cast<std::size_t>(std::find(ot.begin(), ot.end(), jscene) - ot.begin());
  auto ps = single(ds, s, h), pt = single(ds, t, h);
  return std::log(j[a][b]) - std::log(ps[a]) - std::log(pt[b]);
}

inline double d2(const std::vector<std::vector<double>>& x, std::size_t a, std::size_t b)
{
  double d = 0.0;
  for (std::size_t c = 0; c < x[a].size(); ++c)
    d += (x[a][c] - x[b][c]) * (x[a][c] - x[b][c]);
  return d;
}

inline std::vector<double> q_density(const std::vector<std::vector<double>>& x)
{
  std::vector<double> q(x.size(), 0.0);
  for (std::size_t a = 0; a < x.size(); ++a)
    for (std::size_t b = 0; b < x.size(); ++b)
      q[a] += std::exp(-d2(x, a, b));
  return normalized(q);
}

inline std::vector<std::vector<double>> q_student(const std::vector<std::vector<double>>& x)
{
  std::vector<std::vector<double>> q(x.size(), std::vector<double>(x.size(), 0.0));
  double total = 0.0;
  for (std::size_t a = 0; a < x.size(); ++a)
    for (std::size_t b = 0; b < x.size(); ++b)
      if (a != b) {
        q[a][b] = 1.0 / (1.0 + d2(x, a, b));
        total += q[a][b];
      }
  for (auto& row : q)
    for (auto& v : row)
      v /= total;
  return q;
}

/// (kl_density, kl_neighbor) by direct summation.
inline std::pair<double, double> objective(const std::vector<std::vector<double>>& x,
                                           const std::vector<double>& pd,
                                           const std::vector<std::vector<double>>& pn)
{
  auto qd = q_density(x);
  auto qn = q_student(x);
  double kd = 0.0, kn = 0.0;
  for (std::size_t a = 0; a < x.size(); ++a) {
    if (pd[a] > 0.0)
      kd += pd[a] * std::log(pd[a] / qd[a]);
    for (std::size_t b = 0; b < x.size(); ++b)
      if (a != b && pn[a][b] > 0.0)
        kn += pn[a][b] * std::log(pn[a][b] / qn[a][b]);
  }
  return {kd, kn};
}

} // namespace naive
} // namespace odex::testing
