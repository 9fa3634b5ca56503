#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace remask {

struct HttpResponse {
  int status = 0;
  std::string body;
};

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

/// POST-only transport. Implementations throw RemoteError when no response
/// was received at all; HTTP error statuses are returned, not thrown.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse post(const std::string& url, const std::string& body,
                            const HttpHeaders& headers) = 0;
};

/// Plain-HTTP transport backed by cpp-httplib. A client is created per call so
/// one transport may be shared across threads.
std::shared_ptr<HttpTransport> make_http_transport(
    std::chrono::milliseconds timeout = std::chrono::seconds(30));

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{5000};
  /// Injected for tests; empty means std::this_thread::sleep_for.
  std::function<void(std::chrono::milliseconds)> sleep;
};

/// Delay before retry number `attempt` (1-based), capped at max_backoff.
std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int attempt);

/// 408, 429 and 5xx.
bool is_retryable_status(int status);

/// Returns the first 2xx response. Transport failures and retryable statuses
/// are retried per policy; other statuses fail immediately.
HttpResponse post_json_with_retry(HttpTransport& transport, const std::string& url,
                                  const nlohmann::json& body, const HttpHeaders& headers,
                                  const RetryPolicy& policy);

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatEndpoint {
  std::string url;
  std::string model = "default";
  std::string token;
  RetryPolicy retry;
  std::size_t max_in_flight = 4;
};

/// Reads REMASK_LLM_ENDPOINT and REMASK_LLM_TOKEN. The url is empty when the
/// endpoint variable is unset.
ChatEndpoint chat_endpoint_from_env();

/// Chat-completion client:
///   {"model":..,"messages":[{"role":..,"content":..}]}
///   -> {"choices":[{"message":{"content":..}}]}
class ChatClient {
 public:
  ChatClient(ChatEndpoint endpoint, std::shared_ptr<HttpTransport> transport);

  std::string complete(const std::vector<ChatMessage>& messages) const;
  const ChatEndpoint& endpoint() const { return endpoint_; }

 private:
  ChatEndpoint endpoint_;
  std::shared_ptr<HttpTransport> transport_;
};

}  // namespace remask
