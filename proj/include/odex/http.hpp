#pragma once

#include <filesystem>
#include <functional>
#include <iostream>
#include <mutex>
#include <string>

// Eigen must precede httplib: <resolv.h> defines a `_res` macro.
#include "odex/service.hpp"

#include <httplib.h>

namespace odex {

struct ServerOptions
{
  std::string host = "127.0.0.1";
  int port = 8080;
  /// Directory with built UI assets, mounted at "/".
  std::optional<std::filesystem::path> ui_dir;
  /// Dataset directory; scene image_ref paths resolve against it under "/scenes".
  std::optional<std::filesystem::path> data_dir;
  /// Receives one line per API request (a replayable JSON record).
  std::function<void(const std::string&)> log = [](const std::string& line) { std::cerr << line << '\n'; };
};

inline ApiRequest to_api_request(const httplib::Request& r)
{
  ApiRequest req;
  req.method = r.method;
  req.path = r.path;
  for (const auto& [k, v] : r.params)
    req.query[k] = v;
  req.body = r.body;
  return req;
}

inline void write_response(httplib::Response& res, const ApiResponse& api)
{
  res.status = api.status;
  res.set_content(api.body.dump(), "application/json; charset=utf-8");
}

/// Registers the API routes and static mounts on `server`. API requests are
/// logged before their response is released, so a client that has seen a
/// response can rely on its record being in the log.
inline void install_routes(httplib::Server& server, Session& session, const ServerOptions& opts)
{
  auto log_mutex = std::make_shared<std::mutex>();
  auto record = [log = opts.log, log_mutex](const ApiRequest& req, int status) {
    if (!log)
      return;
    auto line = to_json(req);
    line["status"] = status;
    std::lock_guard lock(*log_mutex);
    log(line.dump());
  };
  auto reply = [record](const ApiRequest& req, httplib::Response& res, const ApiResponse& api) {
    record(req, api.status);
    write_response(res, api);
  };

  auto handle = [&session, record, reply](const httplib::Request& r, httplib::Response& res) {
    auto req = to_api_request(r);
    if (req.method == "POST" && req.path == "/api/condition" && r.has_param("stream")) {
      Instance anchor{};
      try {
        auto body = nlohmann::json::parse(req.body, nullptr, false);
        if (body.is_discarded())
          throw Error(ErrorCode::invalid_argument, "request body is not valid JSON");
        if (!session.has_dataset())
          return reply(req, res, Session::no_dataset());
        anchor = session.parse_anchor(body);
        detail::require_instance(session.dataset(), anchor);
      } catch (const Error& e) {
        return reply(req, res, api_error(e));
      }
      record(req, 200);
      res.set_chunked_content_provider("application/x-ndjson", [&session, anchor](std::size_t, httplib::DataSink& sink) {
        session.condition_each(anchor, [&](const ordered_json& entry) {
          auto line = entry.dump() + "\n";
          sink.write(line.data(), line.size());
        });
        sink.done();
        return true;
      });
      return;
    }
    reply(req, res, route(session, req));
  };
  // httplib defaults to SO_REUSEPORT, which lets a second server share a busy port.
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  server.Get(R"(/api/.*)", handle);
  server.Post(R"(/api/.*)", handle);

  if (opts.data_dir)
    server.set_mount_point("/scenes", opts.data_dir->string());
  if (opts.ui_dir)
    server.set_mount_point("/", opts.ui_dir->string());
}

/// Binds and serves until stopped; throws Error(io) if the port is taken.
inline void serve(Session& session, const ServerOptions& opts, const std::function<void(int)>& on_ready = {})
{
  httplib::Server server;
  install_routes(server, session, opts);
  int port = opts.port;
  if (port == 0)
    port = server.bind_to_any_port(opts.host);
  else if (!server.bind_to_port(opts.host, port))
    port = -1;
  if (port < 0)
    throw Error(ErrorCode::io, "cannot bind " + opts.host + ":" + std::to_string(opts.port) + " (port in use?)");
  if (on_ready)
    on_ready(port);
  server.listen_after_bind();
}

} // namespace odex
