#pragma once

#include <atomic>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "json.hpp"
#include "t2iaudit/backend.hpp"

namespace t2iaudit {

struct RemoteOptions {
  int timeout_ms = 30000;
  int retries = 2;  // extra attempts after transport failures or 5xx replies
  int max_in_flight = 8;
  int retry_backoff_ms = 50;
};

// Client for a backend served over the /v1 wire protocol, e.g. "http://127.0.0.1:8080".
class RemoteBackend final : public Backend {
 public:
  explicit RemoteBackend(std::string base_url, RemoteOptions options = {});

  BackendInfo info() const override;
  EmbeddingMatrix encode(std::string_view prompt) const override;
  GenerationResult generate(const GenerationRequest& request) const override;

  const std::string& url() const noexcept { return url_; }

 private:
  nlohmann::json call(std::string_view path, const nlohmann::json* body) const;

  std::string url_;
  RemoteOptions options_;
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  mutable int in_flight_ = 0;
  mutable std::optional<BackendInfo> info_;
};

// Hosts a backend behind the wire protocol on a background thread.
class ProtocolServer {
 public:
  explicit ProtocolServer(const Backend& backend);
  ~ProtocolServer();

  ProtocolServer(const ProtocolServer&) = delete;
  ProtocolServer& operator=(const ProtocolServer&) = delete;

  // Binds and starts serving; port 0 picks a free port. Returns the bound port.
  int start(const std::string& host, int port);
  // Blocks until stop() is called from another thread or a signal handler.
  void listen_blocking(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace t2iaudit
