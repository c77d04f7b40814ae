#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "odex/dataset.hpp"

namespace odex {

struct MixtureComponent
{
  double weight = 1.0;
  std::vector<double> mean;
};

struct LabelSpec
{
  std::string name;
  Origin origin = Origin::prompt;
  double occurrence = 1.0;
  double spread = 1.0;
  std::vector<MixtureComponent> components;
};

/// "if `if_present` is detected in a scene, `label` is drawn from `component`".
struct CouplingRule
{
  std::string if_present;
  std::string label;
  std::size_t component = 0;
};

struct GeneratorConfig
{
  std::string prompt;
  int num_scenes = 0;
  int feature_dim = 0;
  std::vector<LabelSpec> labels;
  std::vector<CouplingRule> couplings;
};

struct SyntheticGroundTruth
{
  /// Indexed by label id.
  std::vector<LabelSpec> mixtures;
  /// Component of each detection, indexed by feature row.
  std::vector<int> component_of_row;
  /// Scenes in which each label was generated, ascending.
  std::vector<std::vector<SceneId>> presence;
  std::vector<CouplingRule> couplings;

  int component(const Dataset& ds, Instance inst) const
  {
    return component_of_row[ds.detection(inst).feature_row];
  }
};

namespace detail {

inline Error config_error(const std::string& msg) { return Error(ErrorCode::invalid_argument, msg); }

} // namespace detail

/// Parses the generator config schema (see configs/README.md). Component
/// means may be omitted, in which case component c is placed at
/// `separation` along feature axis c.
inline GeneratorConfig parse_generator_config(const nlohmann::json& j)
{
  GeneratorConfig cfg;
  try {
    cfg.prompt = j.value("prompt", std::string{});
    cfg.num_scenes = j.at("num_scenes").get<int>();
    cfg.feature_dim = j.at("feature_dim").get<int>();
    for (const auto& lj : j.at("labels")) {
      LabelSpec spec;
      spec.name = normalize_label(lj.at("name").get<std::string>());
      spec.origin = parse_origin(lj.value("origin", std::string("prompt")));
      spec.occurrence = lj.value("occurrence", 1.0);
      spec.spread = lj.value("spread", 1.0);
      double separation = lj.value("separation", 10.0);
      const auto& comps = lj.at("components");
      for (std::size_t c = 0; c < comps.size(); ++c) {
        MixtureComponent mc;
        mc.weight = comps[c].at("weight").get<double>();
        if (comps[c].contains("mean")) {
          mc.mean = comps[c].at("mean").get<std::vector<double>>();
        } else {
          mc.mean.assign(static_cast<std::size_t>(std::max(cfg.feature_dim, 0)), 0.0);
          if (cfg.feature_dim > 0)
            mc.mean[c % static_cast<std::size_t>(cfg.feature_dim)] = separation * static_cast<double>(c / static_cast<std::size_t>(cfg.feature_dim) + 1);
        }
        spec.components.push_back(std::move(mc));
      }
      cfg.labels.push_back(std::move(spec));
    }
    if (j.contains("couplings"))
      for (const auto& cj : j.at("couplings"))
        cfg.couplings.push_back({normalize_label(cj.at("if_present").get<std::string>()),
                                 normalize_label(cj.at("label").get<std::string>()),
                                 cj.at("component").get<std::size_t>()});
  } catch (const nlohmann::json::exception& e) {
    throw detail::config_error(std::string("generator config: ") + e.what());
  }
  return cfg;
}

inline nlohmann::ordered_json to_json(const LabelSpec& spec)
{
  nlohmann::ordered_json comps = nlohmann::ordered_json::array();
  for (const auto& c : spec.components)
    comps.push_back({{"weight", c.weight}, {"mean", c.mean}});
  return {{"name", spec.name},
          {"origin", to_string(spec.origin)},
          {"occurrence", spec.occurrence},
          {"spread", spec.spread},
          {"components", comps}};
}

inline void validate_config(const GeneratorConfig& cfg)
{
  using detail::config_error;
  if (cfg.num_scenes < 1)
    throw config_error("num_scenes must be at least 1");
  if (cfg.feature_dim < 2)
    throw config_error("feature_dim must be at least 2, got " + std::to_string(cfg.feature_dim));
  if (cfg.labels.empty())
    throw config_error("config has no labels");
  bool any_prompt = false;
  for (const auto& l : cfg.labels) {
    any_prompt = any_prompt || l.origin == Origin::prompt;
    if (l.components.empty())
      throw config_error("label '" + l.name + "' has no mixture components");
    if (!(l.spread > 0.0) || !std::isfinite(l.spread))
      throw config_error("label '" + l.name + "': spread must be positive");
    if (!(l.occurrence >= 0.0 && l.occurrence <= 1.0))
      throw config_error("label '" + l.name + "': occurrence must lie in [0, 1]");
    double total = 0.0;
    for (const auto& c : l.components) {
      if (!(c.weight >= 0.0) || !std::isfinite(c.weight))
        throw config_error("label '" + l.name + "': invalid weights (negative or non-finite)");
      if (c.mean.size() != static_cast<std::size_t>(cfg.feature_dim))
        throw config_error("label '" + l.name + "': component mean has length " + std::to_string(c.mean.size()) +
                           ", expected " + std::to_string(cfg.feature_dim));
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw config_error("label '" + l.name + "': invalid weights, sum is " + std::to_string(total) +
                         " instead of 1");
  }
  if (!any_prompt)
    throw config_error("config needs at least one prompt-origin label");
  for (std::size_t a = 0; a < cfg.labels.size(); ++a)
    for (std::size_t b = 0; b < a; ++b)
      if (cfg.labels[a].name == cfg.labels[b].name)
        throw config_error("duplicate label '" + cfg.labels[a].name + "'");
  auto find = [&](const std::string& name) -> const LabelSpec* {
    for (const auto& l : cfg.labels)
      if (l.name == name)
        return &l;
    return nullptr;
  };
  for (const auto& r : cfg.couplings) {
    if (!find(r.if_present))
      throw config_error("coupling references unknown label '" + r.if_present + "'");
    const auto* target = find(r.label);
    if (!target)
      throw config_error("coupling references unknown label '" + r.label + "'");
    if (r.component >= target->components.size())
      throw config_error("coupling for '" + r.label + "' names component " + std::to_string(r.component) +
                         " but it has " + std::to_string(target->components.size()));
    if (r.label == r.if_present)
      throw config_error("coupling of label '" + r.label + "' with itself");
  }
}

/// Draws a synthetic dataset: each label is present in a scene with its
/// occurrence probability; a present label yields one detection whose feature
/// is a component mean plus isotropic Gaussian noise of the label's spread.
/// Pure function of (cfg, seed).
inline std::pair<Dataset, SyntheticGroundTruth> generate_synthetic(const GeneratorConfig& cfg, std::uint64_t seed)
{
  validate_config(cfg);
  const auto nl = cfg.labels.size();
  const auto fdim = static_cast<std::size_t>(cfg.feature_dim);

  // Coupling rules resolved to indices: rules_for[target] = {(antecedent, component)}.
  std::vector<std::vector<std::pair<std::size_t, int>>> rules_for(nl);
  for (const auto& r : cfg.couplings) {
    std::size_t ante = 0, target = 0;
    for (std::size_t l = 0; l < nl; ++l) {
      if (cfg.labels[l].name == r.if_present)
        ante = l;
      if (cfg.labels[l].name == r.label)
        target = l;
    }
    rules_for[target].emplace_back(ante, static_cast<int>(r.component));
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> grid(0, 31);

  std::vector<SceneRecord> scenes;
  std::vector<Detection> detections;
  std::vector<float> features;
  SyntheticGroundTruth truth;
  truth.mixtures = cfg.labels;
  truth.couplings = cfg.couplings;
  truth.presence.assign(nl, {});

  std::vector<char> present(nl);
  for (int n = 0; n < cfg.num_scenes; ++n) {
    SceneRecord scene;
    scene.scene_id = n;
    scene.seed = static_cast<std::int64_t>(rng() >> 1);
    scenes.push_back(scene);

    for (std::size_t l = 0; l < nl; ++l)
      present[l] = unit(rng) < cfg.labels[l].occurrence;

    for (std::size_t l = 0; l < nl; ++l) {
      // Draw unconditionally so the random stream does not depend on presence.
      const auto& spec = cfg.labels[l];
      double u = unit(rng);
      int comp = static_cast<int>(spec.components.size()) - 1;
      double acc = 0.0;
      for (std::size_t c = 0; c < spec.components.size(); ++c) {
        acc += spec.components[c].weight;
        if (u < acc) {
          comp = static_cast<int>(c);
          break;
        }
      }
      for (const auto& [ante, forced] : rules_for[l])
        if (present[ante])
          comp = forced;

      std::vector<float> z(fdim);
      const auto& mean = spec.components[static_cast<std::size_t>(comp)].mean;
      for (std::size_t k = 0; k < fdim; ++k)
        z[k] = static_cast<float>(mean[k] + spec.spread * normal(rng));
      std::array<int, 2> loc{grid(rng), grid(rng)};

      if (!present[l])
        continue;
      Detection d;
      d.scene_id = n;
      d.label_id = static_cast<LabelId>(l);
      d.feature_row = detections.size();
      d.loc = loc;
      detections.push_back(d);
      features.insert(features.end(), z.begin(), z.end());
      truth.component_of_row.push_back(comp);
      truth.presence[l].push_back(n);
    }
  }

  for (std::size_t l = 0; l < nl; ++l)
    if (truth.presence[l].empty())
      throw detail::config_error("label '" + cfg.labels[l].name + "' was never generated; raise its occurrence or num_scenes");

  std::vector<ObjectLabel> labels;
  for (std::size_t l = 0; l < nl; ++l)
    labels.push_back({static_cast<LabelId>(l), cfg.labels[l].name, cfg.labels[l].origin});

  Dataset ds(cfg.prompt, cfg.feature_dim, std::move(scenes), std::move(labels), std::move(detections),
             std::move(features));
  return {std::move(ds), std::move(truth)};
}

inline nlohmann::ordered_json to_json(const SyntheticGroundTruth& truth)
{
  nlohmann::ordered_json mixtures = nlohmann::ordered_json::array();
  for (const auto& m : truth.mixtures)
    mixtures.push_back(to_json(m));
  nlohmann::ordered_json couplings = nlohmann::ordered_json::array();
  for (const auto& r : truth.couplings)
    couplings.push_back({{"if_present", r.if_present}, {"label", r.label}, {"component", r.component}});
  return {{"mixtures", mixtures}, {"assignments", truth.component_of_row}, {"couplings", couplings}};
}

inline void write_ground_truth(const SyntheticGroundTruth& truth, const std::filesystem::path& dir)
{
  io::write_file(dir / "ground_truth.json", to_json(truth).dump(2) + "\n");
}

} // namespace odex
