#include <charconv>
#include <fstream>

#include "httplib.h"
#include "json.hpp"

#include "bria/error.hpp"
#include "bria/review.hpp"

namespace bria::review {

using nlohmann::json;

namespace {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownSlide:
    case ErrorCode::UnknownCandidate: return 404;
    case ErrorCode::BadDecision: return 422;
    case ErrorCode::BadParams:
    case ErrorCode::ParseError: return 400;
    default: return 500;
  }
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", code}, {"message", message}}.dump(), "application/json");
}

int int_param(const httplib::Request& req, const char* name, int fallback) {
  if (!req.has_param(name)) return fallback;
  const std::string v = req.get_param_value(name);
  int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw Error(ErrorCode::BadParams, std::string(name) + " must be an integer");
  }
  return out;
}

/// Runs a handler, mapping library errors onto HTTP status codes.
template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      send_error(res, http_status(e.code()), to_string(e.code()), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "Internal", e.what());
    }
  };
}

}  // namespace

struct HttpServer::Impl {
  explicit Impl(ReviewService& s) : service(s) {}
  ReviewService& service;
  httplib::Server server;
};

HttpServer::HttpServer(ReviewService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& svc = impl_->service;
  auto& srv = impl_->server;
  auto json_ok = [](httplib::Response& res, const std::string& body) { res.set_content(body, "application/json"); };

  srv.Get("/slides", guarded([&svc, json_ok](const httplib::Request&, httplib::Response& res) {
            json_ok(res, svc.slides_json());
          }));
  srv.Get(R"(/slides/([^/]+)/candidates)", guarded([&svc, json_ok](const httplib::Request& req, httplib::Response& res) {
            const SortKey sort = parse_sort(req.has_param("sort") ? req.get_param_value("sort") : "probability");
            json_ok(res, to_json(svc.list_candidates(req.matches[1], sort, int_param(req, "page", 1),
                                                     int_param(req, "page_size", 20))));
          }));
  srv.Get(R"(/slides/([^/]+)/report)", guarded([&svc, json_ok](const httplib::Request& req, httplib::Response& res) {
            json_ok(res, to_json(svc.report(req.matches[1])));
          }));
  srv.Get(R"(/candidates/([^/]+))", guarded([&svc, json_ok](const httplib::Request& req, httplib::Response& res) {
            json_ok(res, svc.candidate_json(req.matches[1]));
          }));
  srv.Get(R"(/candidates/([^/]+)/image/([a-z0-9]+))",
          guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            const auto path = svc.image_path(req.matches[1], req.matches[2]);
            std::ifstream in(path, std::ios::binary);
            if (!in) throw Error(ErrorCode::IoFailure, "missing image " + path.string());
            std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
            res.set_content(std::move(bytes), "image/png");
          }));
  srv.Post(R"(/candidates/([^/]+)/verdict)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             json body;
             try {
               body = json::parse(req.body);
             } catch (const json::exception& e) {
               throw Error(ErrorCode::ParseError, e.what());
             }
             if (!body.is_object() || !body.contains("decision") || !body["decision"].is_string()) {
               throw Error(ErrorCode::BadDecision, "body must carry a string 'decision'");
             }
             std::optional<std::string> ts;
             if (body.contains("ts")) ts = body["ts"].get<std::string>();
             const Verdict v = svc.post_verdict(req.matches[1], body["decision"].get<std::string>(),
                                                body.value("reviewer", ""), ts);
             res.status = 201;
             res.set_content(to_json(v), "application/json");
           }));
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::IoFailure, "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace bria::review
