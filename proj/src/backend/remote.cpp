#include "t2iaudit/remote.hpp"

#include <chrono>
#include <thread>

#include "httplib.h"
#include "t2iaudit/error.hpp"
#include "t2iaudit/protocol.hpp"

namespace t2iaudit {

using nlohmann::json;

RemoteBackend::RemoteBackend(std::string base_url, RemoteOptions options)
    : url_(std::move(base_url)), options_(options) {
  while (!url_.empty() && url_.back() == '/') url_.pop_back();
  if (url_.empty()) throw AuditError(ErrorCode::InvalidArgument, "backend URL is empty");
  if (url_.find("://") == std::string::npos) url_ = "http://" + url_;
  if (options_.max_in_flight < 1) options_.max_in_flight = 1;
  if (options_.retries < 0) options_.retries = 0;
}

json RemoteBackend::call(std::string_view path, const json* body) const {
  const std::string endpoint = url_ + std::string(path);
  {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < options_.max_in_flight; });
    ++in_flight_;
  }
  struct Release {
    const RemoteBackend* self;
    ~Release() {
      {
        std::lock_guard lock(self->mu_);
        --self->in_flight_;
      }
      self->cv_.notify_one();
    }
  } release{this};

  std::string last_failure;
  for (int attempt = 0; attempt <= options_.retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(options_.retry_backoff_ms * attempt));
    httplib::Client client(url_);
    if (!client.is_valid()) throw BackendError(ErrorCode::Transport, endpoint + ": invalid backend URL");
    const auto timeout = std::chrono::milliseconds(options_.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    auto res = body ? client.Post(std::string(path), protocol::canonical(*body), "application/json")
                    : client.Get(std::string(path));
    if (!res) {
      last_failure = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_failure = "HTTP " + std::to_string(res->status);
      continue;
    }
    json reply;
    try {
      reply = json::parse(res->body);
    } catch (const json::parse_error&) {
      throw BackendError(ErrorCode::Parse, endpoint + ": reply is not JSON (HTTP " + std::to_string(res->status) + ")");
    }
    if (res->status == 200) return reply;
    if (reply.is_object() && reply.contains("error") && reply["error"].is_string()) {
      const std::string detail = reply.value("detail", std::string());
      throw BackendError(protocol::code_from_wire(reply["error"].get<std::string>()),
                         endpoint + ": " + reply["error"].get<std::string>() + ": " + detail);
    }
    throw BackendError(ErrorCode::Internal, endpoint + ": unexpected HTTP " + std::to_string(res->status));
  }
  throw BackendError(ErrorCode::Transport,
                     endpoint + ": request failed after " + std::to_string(options_.retries + 1) +
                         " attempt(s): " + last_failure,
                     true);
}

BackendInfo RemoteBackend::info() const {
  {
    std::lock_guard lock(mu_);
    if (info_) return *info_;
  }
  BackendInfo fetched = protocol::info_from_json(call(protocol::kInfoPath, nullptr));
  std::lock_guard lock(mu_);
  if (!info_) info_ = fetched;
  return *info_;
}

EmbeddingMatrix RemoteBackend::encode(std::string_view prompt) const {
  const json body = protocol::encode_request(prompt);
  return protocol::embedding_from_json(call(protocol::kEncodePath, &body));
}

GenerationResult RemoteBackend::generate(const GenerationRequest& request) const {
  request.validate();
  const json body = protocol::generate_request_to_json(request);
  return protocol::generate_response_from_json(call(protocol::kGeneratePath, &body), request.noise_seed);
}

struct ProtocolServer::Impl {
  const Backend& backend;
  httplib::Server server;
  std::thread thread;

  explicit Impl(const Backend& b) : backend(b) {}
};

namespace {

void reply_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(protocol::canonical(body), "application/json");
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    reply_json(res, 200, fn());
  } catch (const AuditError& e) {
    reply_json(res, 400, protocol::error_to_json(e.code(), e.what()));
  } catch (const json::exception& e) {
    reply_json(res, 400, protocol::error_to_json(ErrorCode::Parse, std::string("malformed JSON: ") + e.what()));
  } catch (const std::exception& e) {
    reply_json(res, 400, protocol::error_to_json(ErrorCode::Internal, e.what()));
  }
}

}  // namespace

ProtocolServer::ProtocolServer(const Backend& backend) : impl_(std::make_unique<Impl>(backend)) {
  auto& srv = impl_->server;
  const Backend& b = impl_->backend;
  srv.Get(std::string(protocol::kInfoPath), [&b](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { return protocol::info_to_json(b.info()); });
  });
  srv.Post(std::string(protocol::kEncodePath), [&b](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      return protocol::embedding_to_json(b.encode(protocol::encode_request_prompt(json::parse(req.body))));
    });
  });
  srv.Post(std::string(protocol::kGeneratePath), [&b](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      return protocol::generate_response_to_json(b.generate(protocol::generate_request_from_json(json::parse(req.body))));
    });
  });
}

ProtocolServer::~ProtocolServer() { stop(); }

int ProtocolServer::start(const std::string& host, int port) {
  auto& srv = impl_->server;
  int bound = port;
  if (port == 0) {
    bound = srv.bind_to_any_port(host);
    if (bound < 0) throw AuditError(ErrorCode::Io, "cannot bind " + host);
  } else if (!srv.bind_to_port(host, port)) {
    throw AuditError(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
  }
  impl_->thread = std::thread([&srv] { srv.listen_after_bind(); });
  srv.wait_until_ready();
  return bound;
}

void ProtocolServer::listen_blocking(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) {
    throw AuditError(ErrorCode::Io, "cannot listen on " + host + ":" + std::to_string(port));
  }
}

void ProtocolServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace t2iaudit
