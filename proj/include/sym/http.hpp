#pragma once

// HTTP/1.1 + JSON binding of the service.

#include <string>

#include <httplib.h>

#include "sym/analytics.hpp"
#include "sym/json.hpp"
#include "sym/service.hpp"

namespace sym {

struct HttpOptions {
  /// When non-empty, admin and researcher routes require
  /// `Authorization: Bearer <token>`.
  std::string admin_token;
};

namespace http {

inline int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::not_found: return 404;
    case ErrorCode::validation: return 400;
    case ErrorCode::protocol: return 409;
    case ErrorCode::conflict: return 409;
    case ErrorCode::busy: return 503;
    case ErrorCode::incomplete_session: return 409;
  }
  return 500;
}

inline void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json; charset=utf-8");
}

inline json parse_body(const httplib::Request& req) {
  try {
    auto body = json::parse(req.body);
    if (!body.is_object()) fail(ErrorCode::validation, "request body must be a JSON object");
    return body;
  } catch (const json::parse_error& e) {
    fail(ErrorCode::validation, std::string("malformed JSON: ") + e.what());
  }
}

inline std::optional<std::string> idempotency_key(const httplib::Request& req) {
  if (!req.has_header("Idempotency-Key")) return std::nullopt;
  return req.get_header_value("Idempotency-Key");
}

inline double require_coordinate(const json& body, const char* key) {
  auto it = body.find(key);
  if (it == body.end() || !it->is_number()) {
    fail(ErrorCode::validation, std::string("field '") + key + "' must be a number");
  }
  return it->get<double>();
}

inline json outcome_json(const SpotOutcome& o) {
  json round = nullptr;
  if (o.round) round = {{"index", o.spot.rounds.size()}, {"offered", detail::offered_json(*o.round)}};
  return {{"spot", to_json(o.spot)}, {"round", std::move(round)}};
}

/// Wraps a handler with the error-body contract and, optionally, admin auth.
template <typename F>
httplib::Server::Handler guarded(const HttpOptions& options, bool admin, F handler) {
  return [options, admin, handler](const httplib::Request& req, httplib::Response& res) {
    try {
      if (admin && !options.admin_token.empty() &&
          req.get_header_value("Authorization") != "Bearer " + options.admin_token) {
        send_json(res, 401, {{"code", "UNAUTHORIZED"}, {"message", "admin token required"}});
        return;
      }
      handler(req, res);
    } catch (const Error& e) {
      send_json(res, status_for(e.code()), error_body(e));
      if (e.code() == ErrorCode::busy) res.set_header("Retry-After", "1");
    } catch (const json::exception& e) {
      send_json(res, 400, {{"code", "VALIDATION"}, {"message", e.what()}});
    } catch (const std::out_of_range& e) {
      send_json(res, 404, {{"code", "NOT_FOUND"}, {"message", e.what()}});
    }
  };
}

}  // namespace http

inline void install_routes(httplib::Server& server, Service& service, const HttpOptions& options = {}) {
  using http::guarded;
  using http::parse_body;
  using http::send_json;
  using httplib::Request;
  using httplib::Response;

  server.Post("/v1/experiments", guarded(options, true, [&service](const Request& req, Response& res) {
    const auto body = parse_body(req);
    ExperimentSpec spec;
    spec.name = detail::require_string(body, "name", "experiment");
    spec.dictionary_id = detail::require_string(body, "dictionary_id", "experiment");
    if (auto k = detail::optional_string(body, "during_kind", "experiment")) spec.during_kind = parse_enum<DuringKind>(*k);
    if (body.contains("assignment_policy")) spec.assignment_policy = policy_from_json(body["assignment_policy"]);
    if (body.contains("k_suggestions")) spec.k_suggestions = static_cast<int>(detail::require_int(body, "k_suggestions", "experiment"));
    if (body.contains("suggestion_phases")) {
      std::vector<Phase> phases;
      for (const auto& p : detail::require_array(body, "suggestion_phases", "experiment")) {
        phases.push_back(parse_enum<Phase>(p.get<std::string>()));
      }
      spec.suggestion_phases = std::move(phases);
    }
    send_json(res, 201, to_json(service.create_experiment(spec, http::idempotency_key(req))));
  }));

  server.Post("/v1/sessions", guarded(options, false, [&service](const Request& req, Response& res) {
    const auto body = parse_body(req);
    auto session = service.create_session(detail::require_string(body, "experiment_id", "session"),
                                          detail::require_string(body, "participant_pseudonym", "session"),
                                          http::idempotency_key(req));
    send_json(res, 201, to_json(session));
  }));

  server.Post(R"(/v1/sessions/([^/]+)/spots)", guarded(options, false, [&service](const Request& req, Response& res) {
    const auto body = parse_body(req);
    SpotRequest spot;
    spot.session_id = req.matches[1];
    spot.phase = parse_enum<Phase>(detail::require_string(body, "phase", "spot"));
    if (auto k = detail::optional_string(body, "kind", "spot")) spot.kind = parse_enum<SpotKind>(*k);
    spot.stimulus_id = detail::optional_string(body, "stimulus_id", "spot");
    spot.x_raw = http::require_coordinate(body, "x");
    spot.y_raw = http::require_coordinate(body, "y");
    spot.t_ms = detail::require_int(body, "t_ms", "spot");
    send_json(res, 201, http::outcome_json(service.submit_spot(spot, http::idempotency_key(req))));
  }));

  server.Post(R"(/v1/spots/([^/]+)/decision)", guarded(options, false, [&service](const Request& req, Response& res) {
    const auto body = parse_body(req);
    Decision d;
    d.kind = parse_decision(detail::require_string(body, "decision", "decision"));
    d.term_id = detail::optional_string(body, "term_id", "decision");
    send_json(res, 200, http::outcome_json(service.decide_suggestion(req.matches[1], d, http::idempotency_key(req))));
  }));

  server.Post("/v1/markers", guarded(options, false, [&service](const Request& req, Response& res) {
    const auto body = parse_body(req);
    auto marker = service.ingest_marker(detail::require_string(body, "scope_id", "marker"),
                                        detail::require_string(body, "label", "marker"),
                                        detail::require_int(body, "t_ms", "marker"), http::idempotency_key(req));
    send_json(res, 201, to_json(marker));
  }));

  server.Get("/v1/markers", guarded(options, false, [&service](const Request& req, Response& res) {
    json out = json::array();
    for (const auto& m : service.markers(req.get_param_value("scope_id"))) out.push_back(to_json(m));
    send_json(res, 200, out);
  }));

  server.Get(R"(/v1/sessions/([^/]+))", guarded(options, false, [&service](const Request& req, Response& res) {
    send_json(res, 200, service.session_view(req.matches[1]));
  }));

  server.Get(R"(/v1/experiments/([^/]+)/cloud)", guarded(options, true, [&service](const Request& req, Response& res) {
    std::optional<Phase> phase;
    std::optional<SpotKind> kind;
    if (req.has_param("phase")) phase = parse_enum<Phase>(req.get_param_value("phase"));
    if (req.has_param("kind")) kind = parse_enum<SpotKind>(req.get_param_value("kind"));
    const std::string id = req.matches[1];
    send_json(res, 200, service.read([&](const StoreState& s) {
      json out = json::array();
      for (const auto& c : cloud_points(s, id, phase, kind)) out.push_back(to_json(c));
      return out;
    }));
  }));

  server.Get(R"(/v1/experiments/([^/]+)/export\.csv)", guarded(options, true, [&service](const Request& req, Response& res) {
    res.status = 200;
    res.set_content(service.export_csv(ExportFilter::experiment(req.matches[1])), "text/csv; charset=utf-8");
  }));

  server.Post("/v1/admin/dictionaries", guarded(options, true, [&service](const Request& req, Response& res) {
    const auto outcome = service.publish_dictionary(load_dictionary(parse_body(req)), http::idempotency_key(req));
    send_json(res, 201, {{"dictionary_id", outcome.dictionary_id}, {"version", outcome.version}});
  }));

  server.Post(R"(/v1/admin/dictionaries/([^/]+)/update)", guarded(options, true, [&service](const Request& req, Response& res) {
    const auto outcome = service.run_update(req.matches[1], http::idempotency_key(req));
    send_json(res, 200, {{"dictionary_id", outcome.dictionary_id}, {"version", outcome.version}, {"changed", outcome.changed}});
  }));

  server.Get(R"(/v1/dictionaries/([^/]+)/versions/(\d+))", guarded(options, false, [&service](const Request& req, Response& res) {
    const std::string id = req.matches[1];
    const int version = std::stoi(req.matches[2]);
    send_json(res, 200, service.read([&](const StoreState& s) { return dictionary_to_json(*s.dictionaries().get(id, version)); }));
  }));
}

}  // namespace sym
