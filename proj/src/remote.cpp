#include "remask/remote.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <thread>

#include <httplib.h>

#include "remask/error.hpp"

namespace remask {

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw RemoteError("invalid url '" + url + "'");
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

class HttplibTransport final : public HttpTransport {
 public:
  explicit HttplibTransport(std::chrono::milliseconds timeout) : timeout_(timeout) {}

  HttpResponse post(const std::string& url, const std::string& body,
                    const HttpHeaders& headers) override {
    auto [origin, path] = split_url(url);
    httplib::Client client(origin);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = client.Post(path, h, body, "application/json");
    if (!res) {
      throw RemoteError("POST " + url + " failed: " + httplib::to_string(res.error()));
    }
    return {res->status, res->body};
  }

 private:
  std::chrono::milliseconds timeout_;
};

}  // namespace

std::shared_ptr<HttpTransport> make_http_transport(std::chrono::milliseconds timeout) {
  return std::make_shared<HttplibTransport>(timeout);
}

std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int attempt) {
  double ms = static_cast<double>(policy.initial_backoff.count()) *
              std::pow(policy.multiplier, std::max(0, attempt - 1));
  ms = std::min(ms, static_cast<double>(policy.max_backoff.count()));
  return std::chrono::milliseconds(static_cast<long long>(ms));
}

bool is_retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

HttpResponse post_json_with_retry(HttpTransport& transport, const std::string& url,
                                  const nlohmann::json& body, const HttpHeaders& headers,
                                  const RetryPolicy& policy) {
  const std::string payload = body.dump();
  const int attempts = std::max(1, policy.max_attempts);
  std::string last_error;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    std::optional<HttpResponse> res;
    try {
      res = transport.post(url, payload, headers);
    } catch (const RemoteError& e) {
      last_error = e.what();
    }
    if (res) {
      if (res->status >= 200 && res->status < 300) return *res;
      last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
      if (!is_retryable_status(res->status)) throw RemoteError(last_error);
    }
    if (attempt < attempts) {
      auto delay = backoff_delay(policy, attempt);
      if (policy.sleep) {
        policy.sleep(delay);
      } else {
        std::this_thread::sleep_for(delay);
      }
    }
  }
  throw RemoteError("giving up after " + std::to_string(attempts) + " attempts: " + last_error);
}

ChatEndpoint chat_endpoint_from_env() {
  ChatEndpoint ep;
  if (const char* url = std::getenv("REMASK_LLM_ENDPOINT")) ep.url = url;
  if (const char* token = std::getenv("REMASK_LLM_TOKEN")) ep.token = token;
  return ep;
}

ChatClient::ChatClient(ChatEndpoint endpoint, std::shared_ptr<HttpTransport> transport)
    : endpoint_(std::move(endpoint)), transport_(std::move(transport)) {
  if (endpoint_.url.empty()) throw InvalidArgument("chat endpoint url is empty");
  if (!transport_) transport_ = make_http_transport();
}

std::string ChatClient::complete(const std::vector<ChatMessage>& messages) const {
  nlohmann::json body = {{"model", endpoint_.model}, {"messages", nlohmann::json::array()}};
  for (const auto& m : messages) {
    body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  }
  HttpHeaders headers;
  if (!endpoint_.token.empty()) headers.emplace_back("Authorization", "Bearer " + endpoint_.token);
  HttpResponse res = post_json_with_retry(*transport_, endpoint_.url, body, headers, endpoint_.retry);
  auto parsed = nlohmann::json::parse(res.body, nullptr, false);
  if (parsed.is_discarded()) throw RemoteError("chat response is not JSON");
  try {
    return parsed.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw RemoteError("chat response lacks choices[0].message.content");
  }
}

}  // namespace remask
