#pragma once

// HTTP front end for a ReviewSession.
//
//   GET  /versions
//   GET  /flags?version=k
//   GET  /status?version=k
//   GET  /transition/{id}?version=k
//   POST /verdict            body: {"version": k, "unit_id", "decision", "correction", "note"}
//
// `version` defaults to the latest. Errors come back as {"error": message}
// with 400 (malformed), 404 (unknown version/unit/field) or 409 (stale
// version, unit not flagged, verdict already given).

#include <string>
#include <thread>

#include "opeinf/review.hpp"

// After Eigen: <resolv.h>, pulled in by httplib, defines a `_res` macro.
#include <httplib.h>

namespace opeinf {

inline int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::not_found: return 404;
    case ErrorKind::conflict: return 409;
    case ErrorKind::parse:
    case ErrorKind::precondition:
    case ErrorKind::invariant:
      return 400;
    case ErrorKind::unidentifiable:
    case ErrorKind::undefined:
      return 422;
  }
  return 500;
}

class ReviewServer {
 public:
  explicit ReviewServer(ReviewSession& session) : session_(session) { routes(); }

  ~ReviewServer() { stop(); }

  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  /// Binds to host:port (port 0 picks a free port) and serves on a
  /// background thread. Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(ErrorKind::precondition, "cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return bound;
  }

  /// Serves on the calling thread until stop() is called from elsewhere.
  void run(const std::string& host, int port) {
    if (!server_.listen(host, port)) {
      throw Error(ErrorKind::precondition, "cannot listen on " + host + ":" + std::to_string(port));
    }
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  template <typename F>
  void guarded(httplib::Response& res, F&& body) {
    try {
      body();
    } catch (const Error& e) {
      reply(res, http_status(e.kind()), Json{{"error", e.what()}});
    } catch (const std::exception& e) {
      reply(res, 500, Json{{"error", e.what()}});
    }
  }

  static void reply(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  std::size_t version_param(const httplib::Request& req) const {
    if (!req.has_param("version")) return session_.latest();
    const std::string s = req.get_param_value("version");
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != s.size()) throw Error(ErrorKind::parse, "version must be a nonnegative integer");
    return static_cast<std::size_t>(v);
  }

  void routes() {
    server_.Get("/versions", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] { reply(res, 200, session_.versions_json()); });
    });
    server_.Get("/flags", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { reply(res, 200, session_.flags_json(version_param(req))); });
    });
    server_.Get("/status", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { reply(res, 200, session_.status_json(version_param(req))); });
    });
    server_.Get(R"(/transition/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { reply(res, 200, session_.transition_json(req.matches[1].str(), version_param(req))); });
    });
    server_.Post("/verdict", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        Json body;
        try {
          body = Json::parse(req.body);
        } catch (const nlohmann::json::exception& e) {
          throw Error(ErrorKind::parse, std::string("body is not JSON: ") + e.what());
        }
        if (!body.is_object()) throw Error(ErrorKind::parse, "verdict must be a JSON object");
        std::size_t version = 0;
        try {
          version = body.contains("version") ? body["version"].get<std::size_t>() : session_.latest();
        } catch (const nlohmann::json::exception&) {
          throw Error(ErrorKind::parse, "version must be a nonnegative integer");
        }
        const Verdict verdict = verdict_from_json(body);
        const auto result = session_.submit(version, verdict);
        Json out;
        out["seq"] = result.seq;
        out["version"] = version;
        if (result.created_version) {
          const auto v = *result.created_version;
          out["created_version"] = v;
          const Json status = session_.status_json(v);
          out["v_hat"] = status["v_hat"];
          out["outcome"] = status["outcome"];
          out["flagged"] = status["flagged"];
          reply(res, 201, out);
        } else {
          out["created_version"] = nullptr;
          out["validation"] = session_.validation(version);
          reply(res, 200, out);
        }
      });
    });
  }

  ReviewSession& session_;
  httplib::Server server_;
  std::thread thread_;
};

}  // namespace opeinf
