
#include <iostream>

#include "ewoc/service.hpp"

// after Eigen: resolv.h defines a _res macro that clashes with Eigen internals
#include <httplib.h>

namespace ewoc {

namespace {

void send(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw ApiError(ApiCode::bad_request, std::string("malformed JSON: ") + e.what());
  }
}

template <typename Fn>
httplib::Server::Handler handler(const ServeOptions& options, int ok_status, Fn fn) {
  return [&options, ok_status, fn](const httplib::Request& req, httplib::Response& res) {
    if (options.token && req.get_header_value("Authorization") != "Bearer " + *options.token) {
      send(res, 401, {{"error", {{"code", "unauthorized"}, {"message", "missing or invalid bearer token"}}}});
      return;
    }
    try {
      send(res, ok_status, fn(req));
    } catch (const ApiError& e) {
      send(res, http_status(e.code()), e.envelope());
    } catch (const std::exception& e) {
      send(res, 500, {{"error", {{"code", "internal"}, {"message", e.what()}}}});
    }
  };
}

std::vector<double> query_covariates(const httplib::Request& req) {
  return req.has_param("covariates") ? parse_covariate_query(req.get_param_value("covariates"))
                                     : std::vector<double>{};
}

}  // namespace

struct HttpServer::Impl {
  ServeOptions options;
  ApiService api;
  httplib::Server server;

  explicit Impl(ServeOptions o) : options(std::move(o)), api(options.data_dir) { routes(); }

  void routes() {
    server.Post("/api/trials", handler(options, 201, [this](const auto& req) { return api.create_trial(parse_body(req)); }));
    server.Get("/api/trials", handler(options, 200, [this](const auto&) { return api.list_trials(); }));
    server.Get(R"(/api/trials/([0-9a-f]+))",
               handler(options, 200, [this](const auto& req) { return api.get_trial(req.matches[1]); }));
    server.Post(R"(/api/trials/([0-9a-f]+)/patients)", handler(options, 201, [this](const auto& req) {
                  return api.enroll(req.matches[1], parse_body(req));
                }));
    server.Post(R"(/api/trials/([0-9a-f]+)/patients/(\d+)/outcome)", handler(options, 200, [this](const auto& req) {
                  return api.post_outcome(req.matches[1], std::stoi(req.matches[2]), parse_body(req));
                }));
    server.Get(R"(/api/trials/([0-9a-f]+)/recommendation)", handler(options, 200, [this](const auto& req) {
                 return api.recommendation(req.matches[1], query_covariates(req));
               }));
    server.Get(R"(/api/trials/([0-9a-f]+)/posterior)", handler(options, 200, [this](const auto& req) {
                 int points = 21;
                 if (req.has_param("curve_points")) {
                   try {
                     points = std::stoi(req.get_param_value("curve_points"));
                   } catch (const std::exception&) {
                     throw ApiError(ApiCode::bad_request, "curve_points must be an integer");
                   }
                 }
                 return api.posterior(req.matches[1], query_covariates(req), points);
               }));
    server.Get(R"(/api/trials/([0-9a-f]+)/export)",
               handler(options, 200, [this](const auto& req) { return api.export_log(req.matches[1]); }));
  }
};

HttpServer::HttpServer(ServeOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}
HttpServer::~HttpServer() = default;

bool HttpServer::listen() { return impl_->server.listen(impl_->options.host, impl_->options.port); }
void HttpServer::stop() { impl_->server.stop(); }
void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

int serve(const ServeOptions& options) {
  HttpServer server(options);
  std::cerr << "ewoc: serving " << options.data_dir << " on " << options.host << ':' << options.port << '\n';
  if (!server.listen()) {
    std::cerr << "ewoc: cannot listen on port " << options.port << '\n';
    return 1;
  }
  return 0;
}

}  // namespace ewoc
