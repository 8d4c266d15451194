#include "adaptrate/http_service.hpp"

#include <httplib.h>

#include "adaptrate/error.hpp"

namespace adaptrate {

struct HttpService::Impl {
  explicit Impl(SessionStore& s) : store(s) {}

  void handle(const httplib::Request& req, httplib::Response& res) {
    ApiRequest api;
    api.method = req.method;
    api.path = req.path;
    api.body = req.body;
    for (const auto& [k, v] : req.params) api.query.emplace(k, v);
    for (const auto& [k, v] : req.headers) api.headers.emplace(k, v);
    const ApiResponse out = handle_request(store, api);
    res.status = out.status;
    res.set_content(out.body.dump(), "application/json");
  }

  SessionStore& store;
  httplib::Server server;
  bool bound = false;
};

HttpService::HttpService(SessionStore& store) : impl_(std::make_unique<Impl>(store)) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) { impl_->handle(req, res); };
  const char* pattern = R"(/.*)";
  impl_->server.Get(pattern, handler);
  impl_->server.Post(pattern, handler);
  impl_->server.Delete(pattern, handler);
  impl_->server.Put(pattern, handler);
  impl_->server.Patch(pattern, handler);
}

HttpService::~HttpService() { stop(); }

int HttpService::bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  require(bound > 0, ErrorCode::Io, [&] { return "cannot bind " + host + ":" + std::to_string(port); });
  impl_->bound = true;
  return bound;
}

void HttpService::run() {
  require(impl_->bound, ErrorCode::InvalidState, "bind() must succeed before run()");
  impl_->server.listen_after_bind();
}

void HttpService::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

void HttpService::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace adaptrate
