#pragma once

#include <map>
#include <optional>
#include <string>

#include "httplib.h"
#include "json.hpp"

#include "ambiq/corpus/jsonl.hpp"
#include "ambiq/corpus/splits.hpp"
#include "ambiq/corpus/vqa_io.hpp"
#include "ambiq/error.hpp"
#include "ambiq/service/annotation_service.hpp"

namespace ambiq::service {

/// Missing or unknown bearer token.
class AuthError : public Error {
 public:
  using Error::Error;
};

struct HttpOptions {
  /// Bearer token to annotator id. Empty disables authentication; callers
  /// then name themselves with `annotator` / `annotator_id` / `vetter`.
  std::map<std::string, std::string> tokens;
  /// Directory served at "/" for the UI bundle.
  std::optional<std::string> static_dir;
};

/// Token file: a JSON object {"token": "annotator id", ...}.
inline std::map<std::string, std::string> load_tokens(const std::string& path) {
  const auto doc = corpus::detail::parse_json_file(path);
  if (!doc.is_object()) throw ParseError(path, 0, "token file must be a JSON object");
  std::map<std::string, std::string> out;
  for (const auto& [tok, who] : doc.items()) {
    if (!who.is_string()) throw ParseError(path, 0, "annotator for token must be a string");
    out.emplace(tok, who.get<std::string>());
  }
  return out;
}

namespace detail {

inline void send_json(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& kind,
                       const std::string& message) {
  send_json(res, status, {{"error", kind}, {"message", message}});
}

/// Runs a handler and maps library errors to HTTP status codes.
template <class Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const ValidationError& e) {
      send_json(res, 422, {{"error", "validation"},
                           {"invariant", e.invariant()},
                           {"detail", e.detail()}});
    } catch (const AuthError& e) {
      res.set_header("WWW-Authenticate", "Bearer");
      send_error(res, 401, "unauthorized", e.what());
    } catch (const PermissionError& e) {
      send_error(res, 403, "forbidden", e.what());
    } catch (const LookupError& e) {
      send_error(res, 404, "not-found", e.what());
    } catch (const ConflictError& e) {
      send_error(res, 409, "conflict", e.what());
    } catch (const ArgumentError& e) {
      send_error(res, 400, "bad-request", e.what());
    } catch (const nlohmann::json::exception& e) {
      send_error(res, 400, "bad-request", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

inline nlohmann::json body_json(const httplib::Request& req) {
  auto j = nlohmann::json::parse(req.body);
  if (!j.is_object()) throw ArgumentError("request body must be a JSON object");
  return j;
}

inline bool parse_bool(const std::string& s, const std::string& name) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0" || s.empty()) return false;
  throw ArgumentError(name + " must be true or false");
}

}  // namespace detail

/// Registers the /api routes (and the static mount) on `server`. The
/// service must outlive the server.
inline void mount_api(httplib::Server& server, AnnotationService& svc, HttpOptions opts) {
  using httplib::Request;
  using httplib::Response;
  using detail::guarded;

  // Caller identity: the token's annotator when tokens are configured,
  // otherwise the name the request claims.
  auto identity = [tokens = opts.tokens](const Request& req, const std::string& claimed) {
    if (tokens.empty()) {
      if (claimed.empty()) throw ArgumentError("annotator id is required");
      return claimed;
    }
    const auto auth = req.get_header_value("Authorization");
    const std::string prefix = "Bearer ";
    if (auth.rfind(prefix, 0) != 0) throw AuthError("bearer token required");
    auto it = tokens.find(auth.substr(prefix.size()));
    if (it == tokens.end()) throw AuthError("unknown token");
    if (!claimed.empty() && claimed != it->second)
      throw PermissionError("token belongs to '" + it->second + "', not '" + claimed + "'");
    return it->second;
  };
  auto reader = [identity, open = opts.tokens.empty()](const Request& req) {
    if (!open) identity(req, "");
  };

  server.Get("/api/queue/next", guarded([&svc, identity](const Request& req, Response& res) {
    const auto who = identity(req, req.get_param_value("annotator"));
    detail::send_json(res, 200, to_json(svc.next_example(who)));
  }));

  server.Post("/api/annotations", guarded([&svc, identity](const Request& req, Response& res) {
    const auto body = detail::body_json(req);
    auto g = corpus::grouping_from_json(body);
    const auto who = identity(req, g.annotator_id);
    const auto seq = svc.submit(who, std::move(g));
    detail::send_json(res, 201, {{"seq", seq}});
  }));

  server.Post("/api/skips", guarded([&svc, identity](const Request& req, Response& res) {
    const auto body = detail::body_json(req);
    const auto who = identity(req, body.value("annotator_id", std::string()));
    std::optional<std::string> reason;
    if (body.contains("reason") && !body.at("reason").is_null())
      reason = body.at("reason").get<std::string>();
    const auto seq = svc.skip(who, body.at("question_id").get<std::string>(), reason);
    detail::send_json(res, 201, {{"seq", seq}});
  }));

  server.Post("/api/vet", guarded([&svc, identity](const Request& req, Response& res) {
    auto g = corpus::grouping_from_json(detail::body_json(req));
    const auto who = identity(req, req.get_param_value("vetter"));
    const auto seq = svc.vet(who, std::move(g));
    detail::send_json(res, 201, {{"seq", seq}});
  }));

  server.Get("/api/examples/:id", guarded([&svc, reader](const Request& req, Response& res) {
    reader(req);
    const auto& id = req.path_params.at("id");
    auto entry = svc.example(id);
    if (!entry) throw LookupError("unknown question " + id);
    detail::send_json(res, 200, to_json(*entry));
  }));

  server.Get("/api/export", guarded([&svc, reader](const Request& req, Response& res) {
    reader(req);
    ExportFilter f;
    f.vetted_only = detail::parse_bool(req.get_param_value("vetted_only"), "vetted_only");
    if (req.has_param("split"))
      f.split = corpus::split_name_from_string(req.get_param_value("split"));
    const auto out = svc.export_dataset(f);
    res.set_header("X-Export-Summary", to_json(out.summary).dump());
    res.set_content(out.jsonl(), "application/x-ndjson");
  }));

  server.Get("/api/agreement", guarded([&svc, reader](const Request& req, Response& res) {
    reader(req);
    detail::send_json(res, 200, agreement::to_json(svc.live_agreement()));
  }));

  server.Get("/api/stats", guarded([&svc, reader](const Request& req, Response& res) {
    reader(req);
    detail::send_json(res, 200, eval::to_json(svc.stats()));
  }));

  if (opts.static_dir && !server.set_mount_point("/", *opts.static_dir))
    throw IoError("cannot serve static directory " + *opts.static_dir);
}

}  // namespace ambiq::service
