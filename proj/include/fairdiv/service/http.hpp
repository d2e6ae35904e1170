#pragma once

// HTTP/JSON binding of the session manager.
//
//   POST /sessions                      create a session
//   GET  /sessions/{id}?token=&since=   redacted state, long-poll with since
//   POST /sessions/{id}/actions         submit an action
//   GET  /sessions/{id}/transcript      public transcript for the token holder
//   GET  /healthz
//
// Tokens are read from ?token=, an "Authorization: Bearer" header, or a
// "token" field in the action body.

#include <httplib.h>

#include <algorithm>
#include <optional>
#include <string>

#include "fairdiv/service/session.hpp"

namespace fairdiv::service {

struct HttpOptions {
  int max_wait_ms = 30000;
  int default_wait_ms = 20000;
};

inline std::string bearer_token(const httplib::Request& req, const json* body = nullptr) {
  if (req.has_param("token")) return req.get_param_value("token");
  const std::string auth = req.get_header_value("Authorization");
  if (auth.rfind("Bearer ", 0) == 0) return auth.substr(7);
  if (body && body->is_object() && body->contains("token") && (*body)["token"].is_string()) {
    return (*body)["token"].get<std::string>();
  }
  return {};
}

inline void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const ServiceError& e) {
    reply(res, e.status(), error_body(e.code(), e.what()));
  } catch (const Error& e) {
    reply(res, status_for(e.code()), error_body(to_string(e.code()), e.message()));
  } catch (const json::exception& e) {
    reply(res, 422, error_body("InvalidSpec", e.what()));
  } catch (const std::exception& e) {
    reply(res, 500, error_body("Internal", e.what()));
  }
}

inline json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw ServiceError(422, "InvalidSpec", std::string("body is not valid JSON: ") + e.what());
  }
}

/// Registers the API routes on `server`; `manager` must outlive it.
inline void mount(httplib::Server& server, SessionManager& manager, HttpOptions opts = {}) {
  server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, {{"v", io::kSchemaVersion}, {"status", "ok"}});
  });

  server.Post("/sessions", [&manager](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(res, 201, manager.create(parse_body(req))); });
  });

  server.Get(R"(/sessions/([0-9a-f]+))", [&manager, opts](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      std::optional<std::size_t> since;
      int wait = 0;
      if (req.has_param("since")) {
        try {
          since = std::stoul(req.get_param_value("since"));
        } catch (const std::exception&) {
          throw ServiceError(422, "InvalidSpec", "since must be an event index");
        }
        wait = opts.default_wait_ms;
        if (req.has_param("wait")) {
          try {
            wait = std::stoi(req.get_param_value("wait"));
          } catch (const std::exception&) {
            throw ServiceError(422, "InvalidSpec", "wait must be milliseconds");
          }
        }
        wait = std::clamp(wait, 0, opts.max_wait_ms);
      }
      reply(res, 200, manager.state(req.matches[1], bearer_token(req), since, wait));
    });
  });

  server.Post(R"(/sessions/([0-9a-f]+)/actions)", [&manager](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = parse_body(req);
      reply(res, 200, manager.act(req.matches[1], bearer_token(req, &body), body));
    });
  });

  server.Get(R"(/sessions/([0-9a-f]+)/transcript)", [&manager](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, manager.transcript(req.matches[1], bearer_token(req))); });
  });
}

}  // namespace fairdiv::service
