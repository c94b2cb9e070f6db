#include "difftune/gateway.hpp"

#include <cstdlib>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "difftune/errors.hpp"

namespace difftune::gateway {

namespace {

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

nlohmann::json request_to_json(const ChatRequest& r) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : r.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  return {{"model", r.model},
          {"messages", std::move(messages)},
          {"temperature", r.temperature},
          {"max_reasoning_tokens", r.max_reasoning_tokens},
          {"max_output_tokens", r.max_output_tokens},
          {"extra", r.extra}};
}

// Splits "https://host:port/prefix" into the client origin and path prefix.
std::pair<std::string, std::string> split_base(const std::string& base_url) {
  const auto scheme = base_url.find("://");
  const auto path_start = base_url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (path_start == std::string::npos) return {base_url, ""};
  std::string prefix = base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {base_url.substr(0, path_start), prefix};
}

std::string completions_path(const std::string& prefix) {
  if (prefix.size() >= 3 && prefix.compare(prefix.size() - 3, 3, "/v1") == 0) {
    return prefix + "/chat/completions";
  }
  return prefix + "/v1/chat/completions";
}

class HttplibTransport : public HttpTransport {
 public:
  explicit HttplibTransport(std::chrono::seconds timeout) : timeout_(timeout) {}

  HttpResult post(const std::string& base_url, const std::string& path, const std::string& body,
                  const std::vector<std::pair<std::string, std::string>>& headers) override {
    httplib::Client client(base_url);
    client.set_connection_timeout(30);
    client.set_read_timeout(timeout_.count());
    client.set_write_timeout(timeout_.count());
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = client.Post(path, h, body, "application/json");
    if (!res) {
      throw TransportError(fmt::format("POST {}{} failed: {}", base_url, path,
                                       httplib::to_string(res.error())));
    }
    return {res->status, res->body};
  }

 private:
  std::chrono::seconds timeout_;
};

}  // namespace

nlohmann::json request_to_wire(const ChatRequest& r) {
  if (r.messages.empty()) throw InvalidArgument("chat request without messages");
  if (r.messages.front().role != "system" && r.messages.front().role != "user") {
    throw InvalidArgument("first chat message must come from system or user");
  }
  for (const auto& m : r.messages) {
    if (m.role != "system" && m.role != "user" && m.role != "assistant") {
      throw InvalidArgument("unknown chat role '" + m.role + "'");
    }
  }
  if (r.temperature < 0.0) throw InvalidArgument("temperature must be non-negative");
  if (r.max_output_tokens <= 0) throw InvalidArgument("max_output_tokens must be positive");
  if (r.max_reasoning_tokens < 0) throw InvalidArgument("max_reasoning_tokens must be >= 0");
  nlohmann::json body = r.extra.is_object() ? r.extra : nlohmann::json::object();
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : r.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  body["model"] = r.model;
  body["messages"] = std::move(messages);
  body["temperature"] = r.temperature;
  body["max_tokens"] = r.max_output_tokens + r.max_reasoning_tokens;
  if (r.max_reasoning_tokens > 0 && !body.contains("reasoning")) {
    body["reasoning"] = {{"max_tokens", r.max_reasoning_tokens}};
  }
  return body;
}

std::string request_hash(const ChatRequest& request) {
  return fmt::format("{:016x}", fnv1a64(request_to_wire(request).dump()));
}

ChatResponse parse_wire_response(std::string_view body) {
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw MalformedResponse("response body is not a JSON object");
  }
  try {
    const auto& choice = j.at("choices").at(0);
    ChatResponse r;
    const auto& content = choice.at("message").at("content");
    r.content = content.is_null() ? std::string{} : content.get<std::string>();
    r.finish_reason = choice.value("finish_reason", std::string{});
    if (choice.contains("finish_reason") && choice.at("finish_reason").is_null()) {
      r.finish_reason.clear();
    }
    if (r.finish_reason == "stop" && content.is_null()) {
      throw MalformedResponse("finished response without content");
    }
    if (j.contains("usage") && j.at("usage").is_object()) {
      const auto& u = j.at("usage");
      r.usage.prompt_tokens = u.value("prompt_tokens", std::int64_t{0});
      r.usage.completion_tokens = u.value("completion_tokens", std::int64_t{0});
      r.usage.total_tokens = u.value("total_tokens", std::int64_t{0});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedResponse(std::string("unexpected response shape: ") + e.what());
  }
}

nlohmann::json response_to_json(const ChatResponse& r) {
  return {{"content", r.content},
          {"finish_reason", r.finish_reason},
          {"usage",
           {{"prompt_tokens", r.usage.prompt_tokens},
            {"completion_tokens", r.usage.completion_tokens},
            {"total_tokens", r.usage.total_tokens}}}};
}

ChatResponse response_from_json(const nlohmann::json& j) {
  ChatResponse r;
  r.content = j.at("content").get<std::string>();
  r.finish_reason = j.value("finish_reason", std::string{});
  if (j.contains("usage")) {
    const auto& u = j.at("usage");
    r.usage = {u.value("prompt_tokens", std::int64_t{0}), u.value("completion_tokens", std::int64_t{0}),
               u.value("total_tokens", std::int64_t{0})};
  }
  return r;
}

std::shared_ptr<HttpTransport> make_http_transport(std::chrono::seconds timeout) {
  return std::make_shared<HttplibTransport>(timeout);
}

GatewayConfig GatewayConfig::from_env() {
  GatewayConfig c;
  if (const char* key = std::getenv("LLM_API_KEY")) c.api_key = key;
  if (const char* url = std::getenv("LLM_BASE_URL"); url && *url) c.base_url = url;
  return c;
}

LiveClient::LiveClient(GatewayConfig config, std::shared_ptr<HttpTransport> transport,
                       Sleeper sleeper)
    : config_(std::move(config)), transport_(std::move(transport)), sleeper_(std::move(sleeper)) {
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  if (config_.max_attempts < 1) throw InvalidArgument("max_attempts must be at least 1");
}

ChatResponse LiveClient::chat(const ChatRequest& request) {
  if (config_.api_key.empty()) throw AuthMissing("LLM_API_KEY is not set");
  const std::string body = request_to_wire(request).dump();
  const auto [origin, prefix] = split_base(config_.base_url);
  const std::string path = completions_path(prefix);
  const std::vector<std::pair<std::string, std::string>> headers = {
      {"Authorization", "Bearer " + config_.api_key}};

  auto delay = config_.backoff_base;
  std::string last_error;
  bool rate_limited = false;
  for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
    std::optional<HttpResult> res;
    try {
      res = transport_->post(origin, path, body, headers);
    } catch (const TransportError& e) {
      rate_limited = false;
      last_error = e.what();
    }
    if (res) {
      if (res->status >= 200 && res->status < 300) return parse_wire_response(res->body);
      rate_limited = res->status == 429;
      last_error = fmt::format("HTTP {}: {}", res->status, res->body.substr(0, 200));
      if (!rate_limited && res->status < 500) throw TransportError(last_error);
    }
    if (attempt < config_.max_attempts) {
      sleeper_(delay);
      delay = std::chrono::milliseconds(
          static_cast<std::int64_t>(static_cast<double>(delay.count()) * config_.backoff_factor));
    }
  }
  const auto msg = fmt::format("giving up after {} attempts: {}", config_.max_attempts, last_error);
  if (rate_limited) throw RateLimited(msg);
  throw TransportError(msg);
}

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::kLive: return "live";
    case Mode::kRecord: return "record";
    case Mode::kReplay: return "replay";
  }
  return "?";
}

Mode parse_mode(std::string_view name) {
  for (auto m : {Mode::kLive, Mode::kRecord, Mode::kReplay}) {
    if (to_string(m) == name) return m;
  }
  throw InvalidArgument(fmt::format("unknown gateway mode '{}'", name));
}

RecordReplayClient::RecordReplayClient(Mode mode, std::filesystem::path store,
                                       std::shared_ptr<ChatClient> inner,
                                       std::filesystem::path transcript)
    : mode_(mode), store_(std::move(store)), transcript_(std::move(transcript)),
      inner_(std::move(inner)) {
  if (mode_ != Mode::kReplay && !inner_) {
    throw InvalidArgument("live and record modes need an underlying client");
  }
  if (mode_ == Mode::kReplay) {
    std::ifstream in(store_);
    if (!in) throw ReplayMiss("replay store '" + store_.string() + "' does not exist");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.contains("request_hash") || !j.contains("response")) {
        throw MalformedResponse(
            fmt::format("replay store '{}' line {} is malformed", store_.string(), line_no));
      }
      replay_[j.at("request_hash").get<std::string>()].push_back(
          response_from_json(j.at("response")));
    }
  }
}

ChatResponse RecordReplayClient::chat(const ChatRequest& request) {
  const std::string hash = request_hash(request);
  if (mode_ == Mode::kReplay) {
    std::lock_guard lock(mutex_);
    auto it = replay_.find(hash);
    if (it == replay_.end() || it->second.empty()) {
      throw ReplayMiss("no recorded response for request " + hash);
    }
    ChatResponse r = std::move(it->second.front());
    it->second.pop_front();
    append_transcript(request, r);
    return r;
  }
  ChatResponse r = inner_->chat(request);
  std::lock_guard lock(mutex_);
  if (mode_ == Mode::kRecord) {
    std::ofstream out(store_, std::ios::app | std::ios::binary);
    if (!out) throw TransportError("cannot write replay store '" + store_.string() + "'");
    nlohmann::json line = {{"request_hash", hash},
                           {"request", request_to_json(request)},
                           {"response", response_to_json(r)}};
    out << line.dump() << '\n';
  }
  append_transcript(request, r);
  return r;
}

void RecordReplayClient::append_transcript(const ChatRequest& request, const ChatResponse& r) {
  if (transcript_.empty()) return;
  std::ofstream out(transcript_, std::ios::app | std::ios::binary);
  nlohmann::json line = {{"request_hash", request_hash(request)},
                         {"request", request_to_json(request)},
                         {"response", response_to_json(r)}};
  out << line.dump() << '\n';
}

std::shared_ptr<ChatClient> make_client(Mode mode, const std::filesystem::path& store,
                                        const std::filesystem::path& transcript,
                                        std::optional<GatewayConfig> config) {
  if (mode == Mode::kReplay) {
    return std::make_shared<RecordReplayClient>(mode, store, nullptr, transcript);
  }
  auto live = std::make_shared<LiveClient>(config ? *config : GatewayConfig::from_env(),
                                           make_http_transport());
  if (mode == Mode::kLive && transcript.empty()) return live;
  return std::make_shared<RecordReplayClient>(mode, store, live, transcript);
}

}  // namespace difftune::gateway
