#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "odex/embed.hpp"

namespace odex {

using ordered_json = nlohmann::ordered_json;

/// "single", "marginal:<t>", "conditional:<t>@<scene>" or "subset".
inline std::string kind_descriptor(const Dataset& ds,
                                   DensityKind kind,
                                   const std::optional<LabelId>& other,
                                   const std::optional<SceneId>& anchor_scene)
{
  switch (kind) {
    case DensityKind::single: return "single";
    case DensityKind::subset: return "subset";
    case DensityKind::marginal: return "marginal:" + ds.label(other.value()).name;
    case DensityKind::conditional:
      return "conditional:" + ds.label(other.value()).name + "@" + std::to_string(anchor_scene.value());
  }
  return "single";
}

inline std::string kind_descriptor(const Dataset& ds, const DensityVector& d)
{
  return kind_descriptor(ds, d.kind, d.other, d.anchor_scene);
}

inline ordered_json to_json(const Dataset& ds, const DensityVector& d)
{
  return {{"label", ds.label(d.label).name},
          {"kind", kind_descriptor(ds, d)},
          {"instance_ids", d.instance_ids},
          {"values", d.values}};
}

inline ordered_json coords_json(const RowMatrix& coords)
{
  ordered_json out = ordered_json::array();
  for (Eigen::Index a = 0; a < coords.rows(); ++a) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index c = 0; c < coords.cols(); ++c)
      row.push_back(coords(a, c));
    out.push_back(std::move(row));
  }
  return out;
}

inline ordered_json to_json(const Dataset& ds, const EmbeddingResult& r)
{
  return {{"label", ds.label(r.label).name},
          {"kind", kind_descriptor(ds, r.kind, r.other, r.anchor_scene)},
          {"dim", r.dim},
          {"instance_ids", r.instance_ids},
          {"coords", coords_json(r.coords)},
          {"kl_density", r.kl_density},
          {"kl_neighbor", r.kl_neighbor},
          {"iterations", r.iterations},
          {"seed", r.seed}};
}

inline ordered_json to_json(const Dataset& ds, const PmiMap& map)
{
  ordered_json entries = ordered_json::array();
  for (const auto& e : map.entries)
    entries.push_back({{"label", ds.label(e.label).name}, {"instance_ids", e.instance_ids}, {"values", e.values}});
  ordered_json unavailable = ordered_json::array();
  for (const auto& [label, reason] : map.unavailable)
    unavailable.push_back({{"label", ds.label(label).name}, {"reason", reason}});
  return {{"anchor", {{"label", ds.label(map.anchor.label).name}, {"scene", map.anchor.scene}}},
          {"entries", entries},
          {"unavailable", unavailable}};
}

} // namespace odex
