// odex: generate, validate, embed, compare and serve object-density datasets.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "odex/http.hpp"
#include "odex/synthetic.hpp"

namespace {

using namespace odex;

struct UsageError : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

std::string fmt_double(double v)
{
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& text, char sep)
{
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, sep))
    if (!tok.empty())
      out.push_back(tok);
  return out;
}

std::vector<double> parse_bandwidths(const std::string& text)
{
  std::vector<double> out;
  for (const auto& tok : split(text, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size())
        throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw UsageError("bad bandwidth '" + tok + "'");
    }
  }
  if (out.empty())
    throw UsageError("no bandwidths given");
  return out;
}

/// "a..b" (inclusive) or "a,b,c".
std::vector<std::uint64_t> parse_seeds(const std::string& text)
{
  auto num = [](const std::string& s) -> std::uint64_t {
    try {
      std::size_t used = 0;
      auto v = std::stoull(s, &used);
      if (used != s.size())
        throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw UsageError("bad seed '" + s + "'");
    }
  };
  std::vector<std::uint64_t> out;
  if (auto dots = text.find(".."); dots != std::string::npos) {
    auto lo = num(text.substr(0, dots));
    auto hi = num(text.substr(dots + 2));
    if (hi < lo)
      throw UsageError("empty seed range '" + text + "'");
    for (auto s = lo; s <= hi; ++s)
      out.push_back(s);
  } else {
    for (const auto& tok : split(text, ','))
      out.push_back(num(tok));
  }
  if (out.empty())
    throw UsageError("no seeds given");
  return out;
}

/// single | subset:<id,...> | marginal:<t> | conditional:<t>@<scene>
DensityVector parse_kind(const Dataset& ds, LabelId s, const std::string& kind, Bandwidth h)
{
  if (kind == "single")
    return single_density(ds, s, h);
  auto colon = kind.find(':');
  if (colon == std::string::npos)
    throw UsageError("unknown density kind '" + kind + "'");
  auto head = kind.substr(0, colon);
  auto rest = kind.substr(colon + 1);
  if (head == "marginal")
    return marginal_density(ds, s, ds.label_id(rest), h);
  if (head == "conditional") {
    auto at = rest.rfind('@');
    if (at == std::string::npos)
      throw UsageError("conditional kind needs <label>@<scene>");
    Instance anchor{ds.label_id(rest.substr(0, at)), static_cast<SceneId>(parse_seeds(rest.substr(at + 1)).at(0))};
    return conditional_density(ds, s, anchor, h);
  }
  if (head == "subset") {
    std::vector<SceneId> scenes;
    for (auto v : parse_seeds(rest))
      scenes.push_back(static_cast<SceneId>(v));
    std::sort(scenes.begin(), scenes.end());
    return subset_density(ds, s, scenes, h);
  }
  throw UsageError("unknown density kind '" + kind + "'");
}

void write_text(const std::string& path, const std::string& text)
{
  if (path == "-") {
    std::cout << text;
    return;
  }
  io::write_file(path, text);
}

int cmd_generate(const std::string& config, std::uint64_t seed, const std::string& out)
{
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(config));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::invalid_argument, config + ": " + e.what());
  }
  auto cfg = parse_generator_config(j);
  auto [ds, truth] = generate_synthetic(cfg, seed);
  write_dataset(ds, out);
  write_ground_truth(truth, out);
  std::cout << "wrote " << out << ": " << ds.num_scenes() << " scenes, " << ds.num_labels() << " labels, "
            << ds.num_detections() << " detections\n";
  return 0;
}

int cmd_validate(const std::string& data)
{
  try {
    auto ds = load_dataset(data);
    std::cout << "valid: prompt \"" << ds.prompt() << "\", " << ds.num_scenes() << " scenes, " << ds.num_labels()
              << " labels, " << ds.num_detections() << " detections, feature_dim " << ds.feature_dim() << "\n";
    for (const auto& l : ds.labels())
      std::cout << "  " << l.name << " (" << to_string(l.origin) << "): " << ds.occurrences(l.label_id).size()
                << " instances\n";
    return 0;
  } catch (const Error& e) {
    std::cout << "invalid: " << e.what() << "\n";
    return 1;
  }
}

int cmd_embed(const std::string& data,
              const std::string& label,
              int dim,
              const std::string& kind,
              std::uint64_t seed,
              double h,
              const std::string& out)
{
  auto ds = load_dataset(data);
  SessionConfig sc;
  sc.seed = seed;
  sc.bandwidth = h;
  Session session(std::move(ds), sc);
  const auto& d = session.dataset();
  auto density = parse_kind(d, d.label_id(label), kind, session.bandwidth());
  auto result = session.embedding(density, dim, seed);
  write_text(out, to_json(d, result).dump() + "\n");
  return 0;
}

int cmd_compare(const std::string& data,
                const std::string& label,
                const std::string& hs,
                const std::string& seeds_text,
                int dim,
                const std::string& out)
{
  using clock = std::chrono::steady_clock;
  auto bandwidths = parse_bandwidths(hs);
  auto seeds = parse_seeds(seeds_text);
  auto ds = load_dataset(data);
  auto s = ds.label_id(label);

  EmbedConfig cfg;
  cfg.dim = dim;
  cfg.validate();
  // P_n depends only on the features, so one build serves every (h, seed).
  auto base = single_density(ds, s, Bandwidth(bandwidths.front()));
  auto t0 = clock::now();
  auto features = support_features(ds, base);
  std::optional<NeighborDistribution> pn;
  if (features.rows() > 1)
    pn = build_neighbors(features, cfg);
  double pn_seconds = std::chrono::duration<double>(clock::now() - t0).count();

  std::ostringstream csv;
  csv << "label,h,method,seed,kl_density,kl_neighbor,seconds,iterations\n";
  double log_ratio_sum = 0.0;
  int ratio_count = 0;
  std::map<std::uint64_t, std::pair<EmbeddingResult, double>> tsne_runs;
  for (double h : bandwidths) {
    auto density = single_density(ds, s, Bandwidth(h));
    for (auto seed : seeds) {
      cfg.seed = seed;
      double kl_tsne = 0.0, kl_dsne = 0.0;
      for (const char* method : {"tsne", "dsne"}) {
        auto start = clock::now();
        EmbeddingResult r;
        bool is_tsne = std::string_view(method) == "tsne";
        double secs = 0.0;
        if (is_tsne && pn && tsne_runs.count(seed)) {
          // The tSNE objective ignores P_d, so the embedding is the same for
          // every h; only its kl_density against this h's density changes.
          std::tie(r, secs) = tsne_runs.at(seed);
          r.kl_density = objective(r.coords, density.values, *pn, cfg.lambda).kl_density;
        } else {
          if (pn)
            r = is_tsne ? tsne_embed(density, *pn, cfg) : optimize(density, *pn, cfg);
          else
            r = is_tsne ? tsne_embed(density, features, cfg) : optimize(density, features, cfg);
          secs = std::chrono::duration<double>(clock::now() - start).count();
          if (is_tsne)
            tsne_runs.try_emplace(seed, r, secs);
        }
        (is_tsne ? kl_tsne : kl_dsne) = r.kl_density;
        std::string row = ds.label(s).name + "," + fmt_double(h) + "," + method + "," + std::to_string(seed) + "," +
                          fmt_double(r.kl_density) + "," + fmt_double(r.kl_neighbor) + "," + fmt_double(secs) + "," +
                          std::to_string(r.iterations);
        csv << row << "\n";
        std::cout << row << "\n";
      }
      if (kl_tsne > 0.0 && kl_dsne > 0.0) {
        log_ratio_sum += std::log(kl_dsne / kl_tsne);
        ++ratio_count;
      }
    }
  }
  write_text(out, csv.str());
  std::cout << "neighbor affinities: " << fmt_double(pn_seconds) << " s (shared)\n";
  if (ratio_count > 0)
    std::cout << "geometric-mean kl_density ratio (dsne/tsne): " << fmt_double(std::exp(log_ratio_sum / ratio_count))
              << "\n";
  return 0;
}

int cmd_serve(const std::string& data,
              const std::string& host,
              int port,
              std::uint64_t seed,
              double h,
              const std::string& ui,
              const std::string& request_log)
{
  auto ds = load_dataset(data);
  SessionConfig sc;
  sc.seed = seed;
  sc.bandwidth = h;
  Session session(std::move(ds), sc);

  ServerOptions opts;
  opts.host = host;
  opts.port = port;
  namespace fs = std::filesystem;
  auto data_dir = fs::is_directory(data) ? fs::path(data) : fs::path(data).parent_path();
  opts.data_dir = data_dir.empty() ? fs::path(".") : data_dir;
  if (!ui.empty()) {
    if (!fs::is_directory(ui))
      throw Error(ErrorCode::io, "ui directory not found: " + ui);
    opts.ui_dir = ui;
  }
  std::shared_ptr<std::ofstream> log_file;
  if (!request_log.empty()) {
    log_file = std::make_shared<std::ofstream>(request_log, std::ios::app);
    if (!*log_file)
      throw Error(ErrorCode::io, "cannot open request log " + request_log);
  }
  opts.log = [log_file](const std::string& line) {
    std::cerr << line << std::endl;
    if (log_file)
      *log_file << line << std::endl;
  };
  serve(session, opts, [&](int bound) {
    std::cout << "listening on http://" << host << ":" << bound << std::endl;
  });
  return 0;
}

int cmd_replay(const std::string& data, std::uint64_t seed, double h, const std::string& log, const std::string& out)
{
  SessionConfig sc;
  sc.seed = seed;
  sc.bandwidth = h;
  Session session(load_dataset(data), sc);
  std::ifstream in(log);
  if (!in)
    throw Error(ErrorCode::io, "missing file: " + log);
  std::string line, result;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty())
      continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("path"))
      throw Error(ErrorCode::invalid_argument, log + " line " + std::to_string(lineno) + ": not a request record");
    auto resp = route(session, parse_request(j));
    result += ordered_json{{"status", resp.status}, {"body", resp.body}}.dump() + "\n";
  }
  write_text(out, result);
  return 0;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Object-density exploration: datasets, density-preserving embeddings and the API server"};
  // "--h" is the bandwidth flag, so help is long-form only.
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);

  std::string config, out, data, label, kind = "single", hs = "40,80", seeds = "0..4", host = "127.0.0.1", ui, log;
  std::uint64_t seed = 0;
  int dim = 2, port = 8080;
  double h = default_bandwidth;

  auto* gen = app.add_subcommand("generate", "Synthesize a dataset from a generator config");
  gen->add_option("--config", config, "Generator config JSON")->required();
  gen->add_option("--seed", seed, "Random seed");
  gen->add_option("--out", out, "Output dataset directory")->required();

  auto* val = app.add_subcommand("validate", "Load a dataset and check its invariants");
  val->add_option("--data", data, "Dataset directory or manifest.json")->required();

  auto* cmp = app.add_subcommand("compare", "tSNE vs dSNE density preservation table");
  cmp->add_option("--data", data, "Dataset directory")->required();
  cmp->add_option("--label", label, "Object label")->required();
  cmp->add_option("--h", hs, "Comma-separated KDE bandwidths");
  cmp->add_option("--seeds", seeds, "Seed range a..b or comma list");
  cmp->add_option("--dim", dim, "Embedding dimension")->check(CLI::IsMember({1, 2}));
  cmp->add_option("--out", out, "CSV output path ('-' for stdout)")->required();

  auto* emb = app.add_subcommand("embed", "Density-preserving embedding of one density");
  emb->add_option("--data", data, "Dataset directory")->required();
  emb->add_option("--label", label, "Object label")->required();
  emb->add_option("--dim", dim, "Embedding dimension")->check(CLI::IsMember({1, 2}));
  emb->add_option("--kind", kind, "single | marginal:<label> | conditional:<label>@<scene> | subset:<ids>");
  emb->add_option("--seed", seed, "Initialization seed");
  emb->add_option("--h", h, "KDE bandwidth")->check(CLI::PositiveNumber);
  emb->add_option("--out", out, "Output JSON path ('-' for stdout)")->required();

  auto* srv = app.add_subcommand("serve", "Run the HTTP/JSON API");
  srv->add_option("--data", data, "Dataset directory")->required();
  srv->add_option("--host", host, "Bind address");
  srv->add_option("--port", port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
  srv->add_option("--seed", seed, "Session seed for every embedding");
  srv->add_option("--h", h, "KDE bandwidth")->check(CLI::PositiveNumber);
  srv->add_option("--ui", ui, "Directory of built UI assets");
  srv->add_option("--request-log", log, "Append replayable request records to this file");

  auto* rep = app.add_subcommand("replay", "Replay a request log against a fresh session");
  rep->add_option("--data", data, "Dataset directory")->required();
  rep->add_option("--seed", seed, "Session seed");
  rep->add_option("--h", h, "KDE bandwidth")->check(CLI::PositiveNumber);
  rep->add_option("--log", log, "Request log (one JSON record per line)")->required();
  rep->add_option("--out", out, "Response log path ('-' for stdout)")->default_val("-");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed())
      return cmd_generate(config, seed, out);
    if (val->parsed())
      return cmd_validate(data);
    if (cmp->parsed())
      return cmd_compare(data, label, hs, seeds, dim, out);
    if (emb->parsed())
      return cmd_embed(data, label, dim, kind, seed, h, out);
    if (srv->parsed())
      return cmd_serve(data, host, port, seed, h, ui, log);
    if (rep->parsed())
      return cmd_replay(data, seed, h, log, out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
