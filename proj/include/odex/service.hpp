#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "odex/serialize.hpp"

namespace odex {

struct ApiResponse
{
  int status = 200;
  ordered_json body;
};

inline ApiResponse api_error(int status, std::string_view code, const std::string& message, ordered_json detail = nullptr)
{
  return {status, {{"code", code}, {"message", message}, {"detail", std::move(detail)}}};
}

inline int http_status(ErrorCode code)
{
  switch (code) {
    case ErrorCode::unknown_label:
    case ErrorCode::not_an_instance: return 404;
    case ErrorCode::no_cooccurrence:
    case ErrorCode::same_label:
    case ErrorCode::empty_subset: return 422;
    case ErrorCode::invalid_argument:
    case ErrorCode::invalid_dataset: return 400;
    case ErrorCode::io:
    case ErrorCode::numeric: return 500;
  }
  return 500;
}

inline ApiResponse api_error(const Error& e)
{
  return api_error(http_status(e.code()), to_string(e.code()), e.what());
}

/// splitmix64 finalizer; mixes a session seed with request coordinates.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t value)
{
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (value + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Seed of the conditional re-projection of `target` anchored on `anchor`.
inline std::uint64_t condition_seed(std::uint64_t session_seed, Instance anchor, LabelId target)
{
  auto s = mix_seed(session_seed, static_cast<std::uint64_t>(anchor.label));
  s = mix_seed(s, static_cast<std::uint64_t>(anchor.scene));
  return mix_seed(s, static_cast<std::uint64_t>(target));
}

struct ViolinProfile
{
  LabelId label = 0;
  std::vector<double> grid;
  std::vector<double> widths;
  double area_scale = 1.0;
};

inline constexpr int violin_grid_size = 256;
inline constexpr double violin_bandwidth = 1.0;

/// Grid covering [min - 3bw, max + 3bw] of the 1D coordinates.
inline std::vector<double> violin_grid(const RowMatrix& coords1d, int samples = violin_grid_size)
{
  double lo = coords1d.col(0).minCoeff() - 3.0 * violin_bandwidth;
  double hi = coords1d.col(0).maxCoeff() + 3.0 * violin_bandwidth;
  std::vector<double> grid(static_cast<std::size_t>(samples));
  for (int g = 0; g < samples; ++g)
    grid[static_cast<std::size_t>(g)] = lo + (hi - lo) * g / (samples - 1);
  return grid;
}

/// Gaussian KDE (bandwidth 1) of the selected 1D coordinates, divided by the
/// total instance count so a subset's profile has area |members| / m.
inline ViolinProfile violin_profile(LabelId label,
                                    const RowMatrix& coords1d,
                                    std::span<const std::size_t> members,
                                    std::vector<double> grid)
{
  ViolinProfile out;
  out.label = label;
  out.grid = std::move(grid);
  const auto m = static_cast<double>(coords1d.rows());
  out.area_scale = static_cast<double>(members.size()) / m;
  const double norm = 1.0 / (m * violin_bandwidth * std::sqrt(2.0 * std::numbers::pi));
  out.widths.resize(out.grid.size());
  for (std::size_t g = 0; g < out.grid.size(); ++g) {
    double acc = 0.0;
    for (auto a : members) {
      double z = (out.grid[g] - coords1d(static_cast<Eigen::Index>(a), 0)) / violin_bandwidth;
      acc += std::exp(-0.5 * z * z);
    }
    out.widths[g] = acc * norm;
  }
  return out;
}

inline ordered_json to_json(const ViolinProfile& v)
{
  return {{"grid", v.grid}, {"widths", v.widths}, {"area_scale", v.area_scale}};
}

struct SessionConfig
{
  std::uint64_t seed = 0;
  double bandwidth = default_bandwidth;
  EmbedConfig embed;
  /// Start conditional re-projections from the marginal matrix cell.
  bool warm_start_conditions = false;
};

/// Shared state behind the HTTP API: the loaded dataset, an embedding cache
/// and the current selection/anchor. Handlers are pure functions of
/// (dataset, seed, request) apart from the selection they store.
class Session
{
public:
  explicit Session(SessionConfig cfg = {})
    : cfg_(std::move(cfg))
  {
  }

  Session(Dataset ds, SessionConfig cfg)
    : cfg_(std::move(cfg))
  {
    load(std::move(ds));
  }

  void load(Dataset ds)
  {
    std::scoped_lock lock(state_mutex_, cache_mutex_);
    ds_ = std::make_shared<const Dataset>(std::move(ds));
    cache_.clear();
    neighbors_.clear();
    selection_.clear();
    anchor_.reset();
  }

  bool has_dataset() const { return dataset_ptr() != nullptr; }
  const SessionConfig& config() const { return cfg_; }
  Bandwidth bandwidth() const { return Bandwidth(cfg_.bandwidth); }

  const Dataset& dataset() const
  {
    auto ds = dataset_ptr();
    if (!ds)
      throw Error(ErrorCode::invalid_argument, "no dataset loaded");
    return *ds;
  }

  EmbedConfig embed_config(int dim, std::uint64_t seed) const
  {
    auto c = cfg_.embed;
    c.dim = dim;
    c.seed = seed;
    return c;
  }

  /// Embedding of `density` with the session settings, cached by
  /// (label, kind, dim, seed).
  EmbeddingResult embedding(const DensityVector& density, int dim, std::uint64_t seed,
                            std::optional<RowMatrix> init = std::nullopt)
  {
    const auto& ds = dataset();
    auto key = ds.label(density.label).name + "|" + kind_descriptor(ds, density) + "|" + std::to_string(dim) + "|" +
               std::to_string(seed) + (init ? "|warm" : "");
    {
      std::lock_guard lock(cache_mutex_);
      if (auto it = cache_.find(key); it != cache_.end())
        return it->second;
    }
    auto cfg = embed_config(dim, seed);
    auto pn = neighbors(density, cfg);
    auto result = pn ? optimize(density, *pn, cfg, std::move(init))
                     : optimize(density, support_features(ds, density), cfg);
    std::lock_guard lock(cache_mutex_);
    return cache_.try_emplace(key, std::move(result)).first->second;
  }

  EmbeddingResult violin_embedding(LabelId label)
  {
    return embedding(single_density(dataset(), label, bandwidth()), 1, cfg_.seed);
  }

  EmbeddingResult matrix_embedding(LabelId row, LabelId col)
  {
    return embedding(marginal_density(dataset(), row, col, bandwidth()), 2, cfg_.seed);
  }

  EmbeddingResult condition_embedding(LabelId target, Instance anchor)
  {
    const auto& ds = dataset();
    auto density = conditional_density(ds, target, anchor, bandwidth());
    std::optional<RowMatrix> init;
    if (cfg_.warm_start_conditions)
      init = matrix_embedding(target, anchor.label).coords;
    return embedding(density, 2, condition_seed(cfg_.seed, anchor, target), std::move(init));
  }

  std::vector<SceneId> selection() const
  {
    std::lock_guard lock(state_mutex_);
    return selection_;
  }

  std::optional<Instance> anchor() const
  {
    std::lock_guard lock(state_mutex_);
    return anchor_;
  }

  // -------------------------------------------------------------------------
  // API handlers

  /// GET /api/meta
  ApiResponse meta() const
  {
    auto ds = dataset_ptr();
    if (!ds)
      return no_dataset();
    std::vector<const ObjectLabel*> order;
    for (const auto& l : ds->labels())
      order.push_back(&l);
    std::stable_sort(order.begin(), order.end(), [&](const ObjectLabel* a, const ObjectLabel* b) {
      if (a->origin != b->origin)
        return a->origin == Origin::prompt;
      return ds->occurrences(a->label_id).size() > ds->occurrences(b->label_id).size();
    });
    ordered_json labels = ordered_json::array();
    for (const auto* l : order)
      labels.push_back({{"label", l->name},
                        {"origin", to_string(l->origin)},
                        {"count", ds->occurrences(l->label_id).size()}});
    return {200,
            {{"prompt", ds->prompt()},
             {"num_scenes", ds->num_scenes()},
             {"bandwidth", cfg_.bandwidth},
             {"seed", cfg_.seed},
             {"labels", labels}}};
  }

  /// GET /api/object/{label}/violin?subset=selection|<id,id,...>
  ApiResponse violin(std::string_view label, std::optional<std::string> subset = std::nullopt)
  {
    return guarded([&]() -> ApiResponse {
      const auto& ds = dataset();
      auto id = ds.label_id(label);
      auto emb = violin_embedding(id);
      auto grid = violin_grid(emb.coords);
      auto all = all_members(emb.instance_ids.size());
      auto base = violin_profile(id, emb.coords, all, grid);
      ordered_json body = {{"label", ds.label(id).name},
                           {"instance_ids", emb.instance_ids},
                           {"coords", column(emb.coords)},
                           {"kl_density", emb.kl_density},
                           {"profile", to_json(base)}};
      if (subset) {
        auto scenes = subset == "selection" ? selection() : parse_scene_list(*subset);
        body["subset"] = overlay_json(id, emb, grid, scenes);
      }
      return {200, std::move(body)};
    });
  }

  /// GET /api/matrix/{prompt_label}/{discovered_label}
  ApiResponse matrix(std::string_view row, std::string_view col)
  {
    return guarded([&]() -> ApiResponse {
      const auto& ds = dataset();
      auto s = ds.label_id(row);
      auto t = ds.label_id(col);
      try {
        return {200, to_json(ds, matrix_embedding(s, t))};
      } catch (const Error& e) {
        if (e.code() != ErrorCode::no_cooccurrence)
          throw;
        return api_error(422, "NO_COOCCURRENCE", e.what(),
                         {{"row", ds.label(s).name}, {"col", ds.label(t).name}, {"never_cooccur", true}});
      }
    });
  }

  /// POST /api/selection {"scene_ids": [...]}
  ApiResponse post_selection(const nlohmann::json& request)
  {
    return guarded([&]() -> ApiResponse {
      const auto& ds = dataset();
      std::vector<SceneId> scenes;
      try {
        for (const auto& v : request.at("scene_ids"))
          scenes.push_back(v.get<SceneId>());
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::invalid_argument, std::string("selection body: ") + e.what());
      }
      for (auto s : scenes)
        if (!ds.valid_scene(s))
          throw Error(ErrorCode::invalid_argument, "invalid scene id " + std::to_string(s));
      std::sort(scenes.begin(), scenes.end());
      scenes.erase(std::unique(scenes.begin(), scenes.end()), scenes.end());
      {
        std::lock_guard lock(state_mutex_);
        selection_ = scenes;
      }

      ordered_json labels = ordered_json::array();
      for (const auto& l : ds.labels()) {
        ordered_json entry = {{"label", l.name}};
        if (scenes.empty()) {
          entry["members"] = ordered_json::array();
          entry["overlay"] = nullptr;
          entry["omitted"] = true;
        } else {
          auto emb = violin_embedding(l.label_id);
          auto ov = overlay_json(l.label_id, emb, violin_grid(emb.coords), scenes);
          entry["members"] = ov["member_ids"];
          entry["overlay"] = ov["profile"];
          entry["omitted"] = ov["omitted"];
        }
        labels.push_back(std::move(entry));
      }

      ordered_json images = ordered_json::array();
      for (auto n : scenes) {
        ordered_json detected = ordered_json::array();
        for (const auto& l : ds.labels())
          if (ds.has_instance({l.label_id, n}))
            detected.push_back(l.name);
        const auto& rec = ds.scenes()[static_cast<std::size_t>(n)];
        images.push_back({{"scene_id", n},
                          {"image_ref", rec.image_ref ? ordered_json(*rec.image_ref) : ordered_json(nullptr)},
                          {"labels", detected}});
      }
      return {200, {{"scene_ids", scenes}, {"labels", labels}, {"images", images}}};
    });
  }

  /// GET /api/session
  ApiResponse session_state() const
  {
    if (!dataset_ptr())
      return no_dataset();
    auto anchor = this->anchor();
    ordered_json a = nullptr;
    if (anchor)
      a = {{"label", dataset().label(anchor->label).name}, {"scene", anchor->scene}};
    return {200, {{"selection", selection()}, {"anchor", a}}};
  }

  /// GET /api/pmi?label=t&scene=j
  ApiResponse pmi(std::string_view label, SceneId scene)
  {
    return guarded([&]() -> ApiResponse {
      const auto& ds = dataset();
      Instance anchor{ds.label_id(label), scene};
      auto map = pmi_map(ds, anchor, bandwidth());
      double bound = 0.0;
      for (const auto& e : map.entries)
        for (double v : e.values)
          bound = std::max(bound, std::abs(v));
      auto body = to_json(ds, map);
      body["color_bound"] = bound;
      return {200, std::move(body)};
    });
  }

  /// Re-projects every other prompt label under the density conditioned on
  /// `anchor`, emitting one JSON object per label in label order.
  void condition_each(Instance anchor, const std::function<void(const ordered_json&)>& emit)
  {
    const auto& ds = dataset();
    detail::require_instance(ds, anchor);
    {
      std::lock_guard lock(state_mutex_);
      anchor_ = anchor;
    }
    std::vector<LabelId> targets;
    for (const auto& l : ds.labels())
      if (l.origin == Origin::prompt && l.label_id != anchor.label)
        targets.push_back(l.label_id);

    // Labels are optimized concurrently; each result depends only on its own
    // seed, and emission follows label order.
    std::vector<std::future<ordered_json>> pending;
    for (auto s : targets)
      pending.push_back(std::async(std::launch::async, [this, &ds, s, anchor] {
        ordered_json entry = {{"label", ds.label(s).name}};
        try {
          entry["result"] = to_json(ds, condition_embedding(s, anchor));
        } catch (const Error& e) {
          entry["error"] = {{"code", to_string(e.code())}, {"message", e.what()}};
        }
        return entry;
      }));
    for (auto& f : pending)
      emit(f.get());
  }

  /// POST /api/condition {"label": t, "scene": j}
  ApiResponse condition(const nlohmann::json& request)
  {
    return guarded([&]() -> ApiResponse {
      auto anchor = parse_anchor(request);
      ordered_json results = ordered_json::array();
      condition_each(anchor, [&](const ordered_json& e) { results.push_back(e); });
      const auto& ds = dataset();
      return {200,
              {{"anchor", {{"label", ds.label(anchor.label).name}, {"scene", anchor.scene}}},
               {"results", results}}};
    });
  }

  Instance parse_anchor(const nlohmann::json& request) const
  {
    const auto& ds = dataset();
    try {
      return {ds.label_id(request.at("label").get<std::string>()), request.at("scene").get<SceneId>()};
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::invalid_argument, std::string("condition body: ") + e.what());
    }
  }

  static ApiResponse no_dataset() { return api_error(409, "NO_DATASET", "no dataset loaded"); }

private:
  std::shared_ptr<const Dataset> dataset_ptr() const
  {
    std::lock_guard lock(state_mutex_);
    return ds_;
  }

  template <typename Fn>
  ApiResponse guarded(Fn&& fn)
  {
    if (!dataset_ptr())
      return no_dataset();
    try {
      return fn();
    } catch (const Error& e) {
      return api_error(e);
    }
  }

  /// Neighbor affinities are shared by every embedding supported on all of O_s.
  std::shared_ptr<const NeighborDistribution> neighbors(const DensityVector& density, const EmbedConfig& cfg)
  {
    const auto& ds = dataset();
    auto occ = ds.occurrences(density.label);
    if (density.instance_ids.size() < 2 || !std::equal(occ.begin(), occ.end(), density.instance_ids.begin(),
                                                       density.instance_ids.end()))
      return nullptr;
    auto key = std::to_string(density.label) + "|" + std::to_string(effective_perplexity(cfg, occ.size()));
    {
      std::lock_guard lock(cache_mutex_);
      if (auto it = neighbors_.find(key); it != neighbors_.end())
        return it->second;
    }
    auto pn = std::make_shared<const NeighborDistribution>(build_neighbors(support_features(ds, density), cfg));
    std::lock_guard lock(cache_mutex_);
    return neighbors_.try_emplace(key, std::move(pn)).first->second;
  }

  static std::vector<std::size_t> all_members(std::size_t m)
  {
    std::vector<std::size_t> out(m);
    for (std::size_t a = 0; a < m; ++a)
      out[a] = a;
    return out;
  }

  static ordered_json column(const RowMatrix& coords)
  {
    std::vector<double> out(static_cast<std::size_t>(coords.rows()));
    for (Eigen::Index a = 0; a < coords.rows(); ++a)
      out[static_cast<std::size_t>(a)] = coords(a, 0);
    return out;
  }

  std::vector<SceneId> parse_scene_list(const std::string& text) const
  {
    std::vector<SceneId> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
      auto comma = text.find(',', pos);
      auto tok = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      if (!tok.empty()) {
        try {
          out.push_back(static_cast<SceneId>(std::stoi(tok)));
        } catch (const std::exception&) {
          throw Error(ErrorCode::invalid_argument, "bad scene id '" + tok + "' in subset");
        }
        if (!dataset().valid_scene(out.back()))
          throw Error(ErrorCode::invalid_argument, "invalid scene id " + tok);
      }
      if (comma == std::string::npos)
        break;
      pos = comma + 1;
    }
    return out;
  }

  /// Overlay of the instances of `label` inside `scenes`, plus the
  /// subset-restricted density of those instances.
  ordered_json overlay_json(LabelId label,
                            const EmbeddingResult& emb,
                            std::vector<double> grid,
                            std::span<const SceneId> scenes)
  {
    std::vector<SceneId> sorted(scenes.begin(), scenes.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> idx;
    std::vector<SceneId> member_ids;
    for (std::size_t a = 0; a < emb.instance_ids.size(); ++a)
      if (std::binary_search(sorted.begin(), sorted.end(), emb.instance_ids[a])) {
        idx.push_back(a);
        member_ids.push_back(emb.instance_ids[a]);
      }
    if (idx.empty())
      return {{"member_ids", member_ids}, {"omitted", true}, {"profile", nullptr}, {"density", nullptr}};
    auto prof = violin_profile(label, emb.coords, idx, std::move(grid));
    auto dens = subset_density(dataset(), label, sorted, bandwidth());
    return {{"member_ids", member_ids},
            {"omitted", false},
            {"profile", to_json(prof)},
            {"density", dens.values}};
  }

  SessionConfig cfg_;
  mutable std::mutex state_mutex_;
  mutable std::mutex cache_mutex_;
  std::shared_ptr<const Dataset> ds_;
  std::map<std::string, EmbeddingResult> cache_;
  std::map<std::string, std::shared_ptr<const NeighborDistribution>> neighbors_;
  std::vector<SceneId> selection_;
  std::optional<Instance> anchor_;
};

struct ApiRequest
{
  std::string method = "GET";
  /// Percent-decoded path, e.g. "/api/object/chair/violin".
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
};

inline std::vector<std::string> split_path(std::string_view path)
{
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (pos <= path.size()) {
    auto slash = path.find('/', pos);
    auto part = path.substr(pos, slash == std::string_view::npos ? std::string_view::npos : slash - pos);
    if (!part.empty())
      parts.emplace_back(part);
    if (slash == std::string_view::npos)
      break;
    pos = slash + 1;
  }
  return parts;
}

/// Dispatches one API request; transport agnostic so request logs can be
/// replayed without a socket.
inline ApiResponse route(Session& session, const ApiRequest& req)
{
  auto parts = split_path(req.path);
  auto query = [&](const std::string& key) -> std::optional<std::string> {
    if (auto it = req.query.find(key); it != req.query.end())
      return it->second;
    return std::nullopt;
  };
  auto body = [&]() {
    auto parsed = nlohmann::json::parse(req.body, nullptr, false);
    if (parsed.is_discarded())
      throw Error(ErrorCode::invalid_argument, "request body is not valid JSON");
    return parsed;
  };
  const bool get = req.method == "GET";
  const bool post = req.method == "POST";
  try {
    if (parts.size() < 2 || parts[0] != "api")
      return api_error(404, "NOT_FOUND", "no such endpoint: " + req.path);
    const auto& ep = parts[1];
    if (get && ep == "meta" && parts.size() == 2)
      return session.meta();
    if (get && ep == "object" && parts.size() == 4 && parts[3] == "violin")
      return session.violin(parts[2], query("subset"));
    if (get && ep == "matrix" && parts.size() == 4)
      return session.matrix(parts[2], parts[3]);
    if (ep == "selection" && parts.size() == 2) {
      if (post)
        return session.post_selection(body());
      if (get) {
        if (!session.has_dataset())
          return Session::no_dataset();
        return {200, {{"scene_ids", session.selection()}}};
      }
    }
    if (get && ep == "session" && parts.size() == 2)
      return session.session_state();
    if (get && ep == "pmi" && parts.size() == 2) {
      auto label = query("label");
      auto scene = query("scene");
      if (!label || !scene)
        throw Error(ErrorCode::invalid_argument, "pmi requires label and scene");
      SceneId j = 0;
      try {
        j = static_cast<SceneId>(std::stoi(*scene));
      } catch (const std::exception&) {
        throw Error(ErrorCode::invalid_argument, "bad scene '" + *scene + "'");
      }
      return session.pmi(*label, j);
    }
    if (post && ep == "condition" && parts.size() == 2)
      return session.condition(body());
  } catch (const Error& e) {
    return api_error(e);
  }
  return api_error(404, "NOT_FOUND", "no such endpoint: " + req.method + " " + req.path);
}

inline ordered_json to_json(const ApiRequest& req)
{
  ordered_json q = ordered_json::object();
  for (const auto& [k, v] : req.query)
    q[k] = v;
  return {{"method", req.method}, {"path", req.path}, {"query", q}, {"body", req.body}};
}

inline ApiRequest parse_request(const nlohmann::json& j)
{
  ApiRequest req;
  req.method = j.value("method", "GET");
  req.path = j.at("path").get<std::string>();
  if (j.contains("query"))
    for (const auto& [k, v] : j.at("query").items())
      req.query[k] = v.get<std::string>();
  req.body = j.value("body", "");
  return req;
}

} // namespace odex
