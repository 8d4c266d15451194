#pragma once

#include <memory>
#include <string>

#include "adaptrate/session.hpp"

namespace adaptrate {

/// HTTP+JSON front end for a SessionStore. Every request is routed through
/// handle_request, so the wire behaviour matches the in-process API.
class HttpService {
 public:
  explicit HttpService(SessionStore& store);
  ~HttpService();

  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  /// Binds to host:port; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop() is called. Requires a successful bind().
  void run();
  void stop();
  /// Blocks until run() is accepting connections.
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace adaptrate
