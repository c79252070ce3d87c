#include <cstdlib>
#include <semaphore>
#include <thread>

#include <httplib.h>

#include "flowdialog/llm.hpp"

namespace flowdialog::llm {

using nlohmann::json;

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path without trailing slash
};

SplitUrl split_url(const std::string& url) {
  const std::size_t scheme = url.find("://");
  const std::size_t path = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (path == std::string::npos) return {url, ""};
  std::string prefix = url.substr(path);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, path), prefix};
}

}  // namespace

struct RemoteBinding::Impl {
  explicit Impl(int cap) : slots(cap) {}
  mutable std::counting_semaphore<1024> slots;
};

RemoteBinding::RemoteBinding(RemoteConfig config)
    : config_(std::move(config)),
      impl_(std::make_unique<Impl>(std::max(1, std::min(config_.max_in_flight, 1024)))) {}

RemoteBinding::~RemoteBinding() = default;

json RemoteBinding::describe() const {
  return {{"kind", "remote"},
          {"endpoint", config_.endpoint},
          {"model", config_.model},
          {"credential_env", config_.credential_env}};
}

json RemoteBinding::request_body(const std::string& model, const Messages& messages,
                                 const DecodingParams& params) {
  json msgs = json::array();
  for (const auto& m : messages) {
    msgs.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
  }
  json body = {{"model", model},
               {"messages", std::move(msgs)},
               {"temperature", params.temperature},
               {"max_tokens", params.max_tokens},
               {"stream", false}};
  if (params.seed) body["seed"] = *params.seed;
  return body;
}

std::string RemoteBinding::parse_response(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw MalformedResponseError(std::string("response is not JSON: ") + e.what());
  }
  try {
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) throw MalformedResponseError("message content is not a string");
    return content.get<std::string>();
  } catch (const json::exception& e) {
    throw MalformedResponseError(std::string("unexpected response shape: ") + e.what());
  }
}

std::string RemoteBinding::attempt(const Messages& messages, const DecodingParams& params) const {
  const SplitUrl url = split_url(config_.endpoint);
  httplib::Client client(url.origin);
  client.set_connection_timeout(config_.connect_timeout);
  client.set_read_timeout(config_.timeout);
  httplib::Headers headers;
  if (!config_.credential_env.empty()) {
    if (const char* key = std::getenv(config_.credential_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }
  const std::string body = request_body(config_.model, messages, params).dump();
  auto res = client.Post(url.prefix + "/chat/completions", headers, body, "application/json");
  if (!res) {
    throw TransportError("request to " + config_.endpoint +
                         " failed: " + httplib::to_string(res.error()));
  }
  if (res->status == 429) throw RateLimitError("rate limited by " + config_.endpoint);
  if (res->status >= 500) {
    throw TransportError("server error " + std::to_string(res->status) + " from " +
                         config_.endpoint);
  }
  if (res->status != 200) {
    throw MalformedResponseError("unexpected status " + std::to_string(res->status) + ": " +
                                 res->body.substr(0, 200));
  }
  return parse_response(res->body);
}

std::string RemoteBinding::complete(const Messages& messages, const DecodingParams& params) const {
  impl_->slots.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{impl_->slots};

  auto backoff = config_.retry.initial_backoff;
  const int attempts = std::max(1, config_.retry.attempts);
  for (int i = 1;; ++i) {
    try {
      return attempt(messages, params);
    } catch (const TransportError&) {
      if (i >= attempts) throw;
    }
    std::this_thread::sleep_for(backoff);
    backoff = std::chrono::milliseconds(
        static_cast<long long>(static_cast<double>(backoff.count()) * config_.retry.multiplier));
  }
}

}  // namespace flowdialog::llm
