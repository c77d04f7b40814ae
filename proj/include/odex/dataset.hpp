#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "odex/common.hpp"

namespace odex {

enum class Origin
{
  prompt,
  discovered
};

inline std::string_view to_string(Origin origin)
{
  return origin == Origin::prompt ? "prompt" : "discovered";
}

inline Origin parse_origin(std::string_view text)
{
  if (text == "prompt")
    return Origin::prompt;
  if (text == "discovered")
    return Origin::discovered;
  throw Error(ErrorCode::invalid_argument, "unknown origin '" + std::string(text) + "'");
}

/// Lowercased, whitespace-trimmed label name.
inline std::string normalize_label(std::string_view name)
{
  auto first = name.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos)
    return {};
  auto last = name.find_last_not_of(" \t\r\n");
  std::string out(name.substr(first, last - first + 1));
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

struct SceneRecord
{
  SceneId scene_id = 0;
  std::optional<std::int64_t> seed;
  std::optional<std::string> image_ref;

  friend bool operator==(const SceneRecord&, const SceneRecord&) = default;
};

struct ObjectLabel
{
  LabelId label_id = 0;
  std::string name;
  Origin origin = Origin::prompt;

  friend bool operator==(const ObjectLabel&, const ObjectLabel&) = default;
};

struct Detection
{
  SceneId scene_id = 0;
  LabelId label_id = 0;
  std::size_t feature_row = 0;
  std::optional<std::array<int, 2>> loc;

  friend bool operator==(const Detection&, const Detection&) = default;
};

/// Immutable collection of scenes, labels, detections and their features.
///
/// The constructor validates every invariant and stores detections in
/// canonical (label, scene) order, so two datasets holding the same records
/// compare equal regardless of input order. Label ids must be dense and equal
/// to their position in `labels`.
class Dataset
{
public:
  Dataset(std::string prompt,
          int feature_dim,
          std::vector<SceneRecord> scenes,
          std::vector<ObjectLabel> labels,
          std::vector<Detection> detections,
          std::vector<float> features)
    : prompt_(std::move(prompt))
    , feature_dim_(feature_dim)
    , scenes_(std::move(scenes))
    , labels_(std::move(labels))
    , detections_(std::move(detections))
    , features_(std::move(features))
  {
    validate_and_index();
  }

  const std::string& prompt() const { return prompt_; }
  int feature_dim() const { return feature_dim_; }
  std::size_t num_scenes() const { return scenes_.size(); }
  std::size_t num_labels() const { return labels_.size(); }
  std::size_t num_detections() const { return detections_.size(); }

  std::span<const SceneRecord> scenes() const { return scenes_; }
  std::span<const ObjectLabel> labels() const { return labels_; }
  std::span<const Detection> detections() const { return detections_; }
  std::span<const float> features() const { return features_; }

  const ObjectLabel& label(LabelId id) const
  {
    check_label(id);
    return labels_[static_cast<std::size_t>(id)];
  }

  std::optional<LabelId> find_label(std::string_view name) const
  {
    auto key = normalize_label(name);
    for (const auto& l : labels_)
      if (l.name == key)
        return l.label_id;
    return std::nullopt;
  }

  LabelId label_id(std::string_view name) const
  {
    if (auto id = find_label(name))
      return *id;
    throw Error(ErrorCode::unknown_label, "unknown label '" + std::string(name) + "'");
  }

  bool valid_scene(SceneId scene) const
  {
    return scene >= 0 && static_cast<std::size_t>(scene) < scenes_.size();
  }

  /// Scenes in which `id` was detected, ascending.
  std::span<const SceneId> occurrences(LabelId id) const
  {
    check_label(id);
    return occurrences_[static_cast<std::size_t>(id)];
  }

  bool has_instance(Instance inst) const
  {
    return find_detection(inst).has_value();
  }

  std::optional<std::size_t> find_detection(Instance inst) const
  {
    if (inst.label < 0 || static_cast<std::size_t>(inst.label) >= labels_.size())
      return std::nullopt;
    const auto& occ = occurrences_[static_cast<std::size_t>(inst.label)];
    auto it = std::lower_bound(occ.begin(), occ.end(), inst.scene);
    if (it == occ.end() || *it != inst.scene)
      return std::nullopt;
    return detection_offset_[static_cast<std::size_t>(inst.label)] +
           static_cast<std::size_t>(it - occ.begin());
  }

  const Detection& detection(Instance inst) const
  {
    if (auto idx = find_detection(inst))
      return detections_[*idx];
    throw Error(ErrorCode::not_an_instance,
                "label '" + label(inst.label).name + "' is not detected in scene " +
                  std::to_string(inst.scene));
  }

  /// Feature vector z_{scene,label}.
  std::span<const float> feature(Instance inst) const
  {
    return row(detection(inst).feature_row);
  }

  std::span<const float> row(std::size_t feature_row) const
  {
    return std::span<const float>(features_).subspan(feature_row * static_cast<std::size_t>(feature_dim_),
                                                      static_cast<std::size_t>(feature_dim_));
  }

  friend bool operator==(const Dataset& a, const Dataset& b)
  {
    return a.prompt_ == b.prompt_ && a.feature_dim_ == b.feature_dim_ && a.scenes_ == b.scenes_ &&
           a.labels_ == b.labels_ && a.detections_ == b.detections_ &&
           a.features_.size() == b.features_.size() &&
           std::memcmp(a.features_.data(), b.features_.data(), a.features_.size() * sizeof(float)) == 0;
  }

private:
  void check_label(LabelId id) const
  {
    if (id < 0 || static_cast<std::size_t>(id) >= labels_.size())
      throw Error(ErrorCode::unknown_label, "unknown label id " + std::to_string(id));
  }

  static Error invalid(const std::string& msg) { return Error(ErrorCode::invalid_dataset, msg); }

  void validate_and_index()
  {
    if (feature_dim_ < 1)
      throw invalid("feature_dim must be positive, got " + std::to_string(feature_dim_));
    if (scenes_.empty())
      throw invalid("dataset has no scenes");
    std::sort(scenes_.begin(), scenes_.end(),
              [](const SceneRecord& a, const SceneRecord& b) { return a.scene_id < b.scene_id; });
    for (std::size_t n = 0; n < scenes_.size(); ++n)
      if (scenes_[n].scene_id != static_cast<SceneId>(n))
        throw invalid("scene ids must be dense and unique in [0, " + std::to_string(scenes_.size()) +
                      "); offending scene_id " + std::to_string(scenes_[n].scene_id));

    if (labels_.empty())
      throw invalid("dataset has no labels");
    bool any_prompt = false;
    for (std::size_t l = 0; l < labels_.size(); ++l) {
      auto& lab = labels_[l];
      if (lab.label_id != static_cast<LabelId>(l))
        throw invalid("label ids must be dense; label '" + lab.name + "' has id " +
                      std::to_string(lab.label_id));
      lab.name = normalize_label(lab.name);
      if (lab.name.empty())
        throw invalid("label " + std::to_string(l) + " has an empty name");
      for (std::size_t k = 0; k < l; ++k)
        if (labels_[k].name == lab.name)
          throw invalid("duplicate label name '" + lab.name + "'");
      any_prompt = any_prompt || lab.origin == Origin::prompt;
    }
    if (!any_prompt)
      throw invalid("dataset has no prompt-origin label");

    const auto fdim = static_cast<std::size_t>(feature_dim_);
    if (features_.size() != detections_.size() * fdim)
      throw invalid("feature matrix size mismatch: expected " + std::to_string(detections_.size()) + " x " +
                    std::to_string(fdim) + " floats, found " + std::to_string(features_.size()));

    for (const auto& d : detections_) {
      if (!valid_scene(d.scene_id))
        throw invalid("detection references unknown scene_id " + std::to_string(d.scene_id));
      if (d.label_id < 0 || static_cast<std::size_t>(d.label_id) >= labels_.size())
        throw invalid("detection references unknown label id " + std::to_string(d.label_id));
      if (d.feature_row >= detections_.size())
        throw invalid("detection (scene " + std::to_string(d.scene_id) + ", label '" +
                      labels_[static_cast<std::size_t>(d.label_id)].name + "') has feature_row " +
                      std::to_string(d.feature_row) + " out of range");
      for (float v : row(d.feature_row))
        if (!std::isfinite(v))
          throw invalid("non-finite feature value in row " + std::to_string(d.feature_row) + " (scene " +
                        std::to_string(d.scene_id) + ", label '" +
                        labels_[static_cast<std::size_t>(d.label_id)].name + "')");
    }

    std::sort(detections_.begin(), detections_.end(), [](const Detection& a, const Detection& b) {
      return a.label_id != b.label_id ? a.label_id < b.label_id : a.scene_id < b.scene_id;
    });
    for (std::size_t k = 1; k < detections_.size(); ++k)
      if (detections_[k].label_id == detections_[k - 1].label_id &&
          detections_[k].scene_id == detections_[k - 1].scene_id)
        throw invalid("duplicate detection for (scene " + std::to_string(detections_[k].scene_id) +
                      ", label '" + labels_[static_cast<std::size_t>(detections_[k].label_id)].name + "')");

    occurrences_.assign(labels_.size(), {});
    detection_offset_.assign(labels_.size(), 0);
    for (std::size_t k = 0; k < detections_.size(); ++k) {
      auto l = static_cast<std::size_t>(detections_[k].label_id);
      if (occurrences_[l].empty())
        detection_offset_[l] = k;
      occurrences_[l].push_back(detections_[k].scene_id);
    }
    for (std::size_t l = 0; l < labels_.size(); ++l)
      if (occurrences_[l].empty())
        throw invalid("label '" + labels_[l].name + "' has no detections");
  }

  std::string prompt_;
  int feature_dim_;
  std::vector<SceneRecord> scenes_;
  std::vector<ObjectLabel> labels_;
  std::vector<Detection> detections_;
  std::vector<float> features_;

  std::vector<std::vector<SceneId>> occurrences_;
  std::vector<std::size_t> detection_offset_;
};

/// O_s as an owned, ascending list of scene ids.
inline std::vector<SceneId> occurrence_set(const Dataset& ds, LabelId label)
{
  auto occ = ds.occurrences(label);
  return {occ.begin(), occ.end()};
}

/// Feature vectors of `label` at `scenes`, one row each, widened to double.
inline RowMatrix instance_features(const Dataset& ds, LabelId label, std::span<const SceneId> scenes)
{
  RowMatrix out(static_cast<Eigen::Index>(scenes.size()), ds.feature_dim());
  for (std::size_t r = 0; r < scenes.size(); ++r) {
    auto z = ds.feature({label, scenes[r]});
    for (std::size_t k = 0; k < z.size(); ++k)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = z[k];
  }
  return out;
}

// ---------------------------------------------------------------------------
// On-disk format

namespace io {

inline constexpr const char* manifest_file = "manifest.json";
inline constexpr const char* scenes_file = "scenes.jsonl";
inline constexpr const char* detections_file = "detections.jsonl";
inline constexpr const char* features_file = "features.bin";

inline Error io_error(const std::string& msg) { return Error(ErrorCode::io, msg); }
inline Error bad_record(const std::string& msg) { return Error(ErrorCode::invalid_dataset, msg); }

inline void append_le(std::string& out, float v)
{
  auto bits = std::bit_cast<std::uint32_t>(v);
  for (int b = 0; b < 4; ++b)
    out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
}

inline float read_le(const unsigned char* p)
{
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b)
    bits |= static_cast<std::uint32_t>(p[b]) << (8 * b);
  return std::bit_cast<float>(bits);
}

/// Little-endian float32 encoding used by features.bin.
inline std::string encode_features(std::span<const float> values)
{
  std::string out;
  out.reserve(values.size() * 4);
  for (float v : values)
    append_le(out, v);
  return out;
}

inline std::string read_file(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw io_error("missing file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw io_error("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw io_error("write failed: " + path.string());
}

template <typename Fn>
void for_each_jsonl(const std::string& text, const std::string& file, Fn&& fn)
{
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw bad_record(file + " line " + std::to_string(lineno) + ": " + e.what());
    }
    try {
      fn(rec, lineno);
    } catch (const nlohmann::json::exception& e) {
      throw bad_record(file + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

} // namespace io

/// Loads and validates a dataset directory from its manifest.json path (or
/// the directory containing it).
inline Dataset load_dataset(const std::filesystem::path& manifest_path)
{
  namespace fs = std::filesystem;
  fs::path manifest = fs::is_directory(manifest_path) ? manifest_path / io::manifest_file : manifest_path;
  fs::path dir = manifest.parent_path();

  nlohmann::json m;
  try {
    m = nlohmann::json::parse(io::read_file(manifest));
  } catch (const nlohmann::json::parse_error& e) {
    throw io::bad_record(std::string("manifest.json: ") + e.what());
  }

  std::string prompt;
  int feature_dim = 0;
  std::size_t num_scenes = 0;
  fs::path scenes_path, detections_path, features_path;
  try {
    prompt = m.at("prompt").get<std::string>();
    feature_dim = m.at("feature_dim").get<int>();
    auto ns = m.at("num_scenes").get<long long>();
    if (ns < 1)
      throw io::bad_record("manifest.json: num_scenes must be positive");
    num_scenes = static_cast<std::size_t>(ns);
    const auto& files = m.at("files");
    scenes_path = dir / files.at("scenes").get<std::string>();
    detections_path = dir / files.at("detections").get<std::string>();
    features_path = dir / files.at("features").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw io::bad_record(std::string("manifest.json: ") + e.what());
  }
  if (feature_dim < 1)
    throw io::bad_record("manifest.json: feature_dim must be positive");

  std::vector<SceneRecord> scenes;
  std::vector<bool> seen(num_scenes, false);
  io::for_each_jsonl(io::read_file(scenes_path), "scenes.jsonl", [&](const nlohmann::json& r, std::size_t line) {
    SceneRecord s;
    auto id = r.at("scene_id").get<long long>();
    if (id < 0 || static_cast<std::size_t>(id) >= num_scenes)
      throw io::bad_record("scenes.jsonl line " + std::to_string(line) + ": scene_id " + std::to_string(id) +
                           " out of range [0, " + std::to_string(num_scenes) + ")");
    if (seen[static_cast<std::size_t>(id)])
      throw io::bad_record("scenes.jsonl line " + std::to_string(line) + ": duplicate scene_id " +
                           std::to_string(id));
    seen[static_cast<std::size_t>(id)] = true;
    s.scene_id = static_cast<SceneId>(id);
    if (r.contains("seed") && !r.at("seed").is_null())
      s.seed = r.at("seed").get<std::int64_t>();
    if (r.contains("image_ref") && !r.at("image_ref").is_null())
      s.image_ref = r.at("image_ref").get<std::string>();
    scenes.push_back(std::move(s));
  });
  if (scenes.size() != num_scenes)
    throw io::bad_record("scenes.jsonl: expected " + std::to_string(num_scenes) + " scenes, found " +
                         std::to_string(scenes.size()));

  auto raw = io::read_file(features_path);
  const std::size_t row_bytes = static_cast<std::size_t>(feature_dim) * 4;

  std::vector<ObjectLabel> labels;
  std::map<std::string, LabelId> label_index;
  std::vector<Detection> detections;
  std::vector<std::size_t> row_lines;
  std::map<std::pair<SceneId, LabelId>, std::size_t> seen_pairs;
  io::for_each_jsonl(io::read_file(detections_path), "detections.jsonl",
                     [&](const nlohmann::json& r, std::size_t line) {
    auto where = "detections.jsonl line " + std::to_string(line) + ": ";
    auto scene = r.at("scene_id").get<long long>();
    if (scene < 0 || static_cast<std::size_t>(scene) >= num_scenes)
      throw io::bad_record(where + "scene_id " + std::to_string(scene) + " references an unknown scene (num_scenes " +
                           std::to_string(num_scenes) + ")");
    auto name = normalize_label(r.at("label").get<std::string>());
    if (name.empty())
      throw io::bad_record(where + "empty label name");
    auto origin = parse_origin(r.at("origin").get<std::string>());
    auto [it, inserted] = label_index.try_emplace(name, static_cast<LabelId>(labels.size()));
    if (inserted)
      labels.push_back({it->second, name, origin});
    else if (labels[static_cast<std::size_t>(it->second)].origin != origin)
      throw io::bad_record(where + "label '" + name + "' has inconsistent origin");
    auto row = r.at("feature_row").get<long long>();
    if (row < 0)
      throw io::bad_record(where + "feature_row must be non-negative");
    row_lines.push_back(line);
    Detection d;
    d.scene_id = static_cast<SceneId>(scene);
    d.label_id = it->second;
    d.feature_row = static_cast<std::size_t>(row);
    if (r.contains("loc") && !r.at("loc").is_null()) {
      const auto& loc = r.at("loc");
      if (!loc.is_array() || loc.size() != 2)
        throw io::bad_record(where + "loc must be [row, col] or null");
      d.loc = std::array<int, 2>{loc[0].get<int>(), loc[1].get<int>()};
    }
    if (auto [prev, fresh] = seen_pairs.try_emplace({d.scene_id, d.label_id}, line); !fresh)
      throw io::bad_record(where + "duplicate detection of '" + name + "' in scene " + std::to_string(scene) +
                           " (first at line " + std::to_string(prev->second) + ")");
    detections.push_back(d);
  });

  if (raw.size() != detections.size() * row_bytes)
    throw io::bad_record("features.bin: feature matrix size mismatch: expected " +
                         std::to_string(detections.size() * row_bytes) + " bytes (" +
                         std::to_string(detections.size()) + " x " + std::to_string(feature_dim) +
                         " float32), found " + std::to_string(raw.size()));
  for (std::size_t k = 0; k < detections.size(); ++k)
    if (detections[k].feature_row >= detections.size())
      throw io::bad_record("detections.jsonl line " + std::to_string(row_lines[k]) + ": feature_row " +
                           std::to_string(detections[k].feature_row) + " outside the feature matrix");

  std::vector<float> features(raw.size() / 4);
  const auto* bytes = reinterpret_cast<const unsigned char*>(raw.data());
  for (std::size_t k = 0; k < features.size(); ++k)
    features[k] = io::read_le(bytes + 4 * k);

  return Dataset(std::move(prompt), feature_dim, std::move(scenes), std::move(labels), std::move(detections),
                 std::move(features));
}

/// Writes the dataset directory (manifest, scenes, detections, features).
inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir)
{
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw io::io_error("cannot create directory " + dir.string() + ": " + ec.message());

  nlohmann::ordered_json manifest;
  manifest["prompt"] = ds.prompt();
  manifest["feature_dim"] = ds.feature_dim();
  manifest["num_scenes"] = ds.num_scenes();
  manifest["files"] = {{"scenes", io::scenes_file},
                       {"detections", io::detections_file},
                       {"features", io::features_file}};
  io::write_file(dir / io::manifest_file, manifest.dump(2) + "\n");

  std::string scenes;
  for (const auto& s : ds.scenes()) {
    nlohmann::ordered_json r;
    r["scene_id"] = s.scene_id;
    r["seed"] = s.seed ? nlohmann::ordered_json(*s.seed) : nlohmann::ordered_json(nullptr);
    r["image_ref"] = s.image_ref ? nlohmann::ordered_json(*s.image_ref) : nlohmann::ordered_json(nullptr);
    scenes += r.dump() + "\n";
  }
  io::write_file(dir / io::scenes_file, scenes);

  std::string dets;
  for (const auto& d : ds.detections()) {
    const auto& lab = ds.label(d.label_id);
    nlohmann::ordered_json r;
    r["scene_id"] = d.scene_id;
    r["label"] = lab.name;
    r["origin"] = to_string(lab.origin);
    r["feature_row"] = d.feature_row;
    r["loc"] = d.loc ? nlohmann::ordered_json::array({(*d.loc)[0], (*d.loc)[1]}) : nlohmann::ordered_json(nullptr);
    dets += r.dump() + "\n";
  }
  io::write_file(dir / io::detections_file, dets);
  io::write_file(dir / io::features_file, io::encode_features(ds.features()));
}

} // namespace odex
