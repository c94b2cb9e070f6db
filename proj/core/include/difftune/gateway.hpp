#pragma once

// Chat-completion client for OpenAI-compatible endpoints, with retries and a
// record/replay store so that LLM-driven code paths run offline.

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace difftune::gateway {

struct Message {
  std::string role;  // system | user | assistant
  std::string content;
  friend bool operator==(const Message&, const Message&) = default;
};

struct ChatRequest {
  std::string model;
  std::vector<Message> messages;
  double temperature = 0.0;
  std::int64_t max_reasoning_tokens = 0;
  std::int64_t max_output_tokens = 1024;
  /// Merged into the wire body; provider-specific knobs go here.
  nlohmann::json extra = nlohmann::json::object();
};

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t total_tokens = 0;
  friend bool operator==(const Usage&, const Usage&) = default;
};

struct ChatResponse {
  std::string content;
  std::string finish_reason;
  Usage usage;
  friend bool operator==(const ChatResponse&, const ChatResponse&) = default;
};

/// Body of POST /v1/chat/completions. Keys sorted, so dumping it is
/// canonical. A positive reasoning budget becomes
/// "reasoning": {"max_tokens": N} unless `extra` already sets "reasoning".
/// Throws InvalidArgument when the request breaks its invariants.
nlohmann::json request_to_wire(const ChatRequest& request);
/// FNV-1a 64 of the canonical wire body, 16 hex digits.
std::string request_hash(const ChatRequest& request);

/// Reads choices[0].message.content, finish_reason and usage. Throws
/// MalformedResponse.
ChatResponse parse_wire_response(std::string_view body);
nlohmann::json response_to_json(const ChatResponse& response);
ChatResponse response_from_json(const nlohmann::json& j);

struct HttpResult {
  int status = 0;
  std::string body;
};

/// One HTTP POST. Implementations throw TransportError when no response
/// arrives at all.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResult post(const std::string& base_url, const std::string& path,
                          const std::string& body,
                          const std::vector<std::pair<std::string, std::string>>& headers) = 0;
};

/// cpp-httplib backed transport. https needs the library built with OpenSSL.
std::shared_ptr<HttpTransport> make_http_transport(std::chrono::seconds timeout = std::chrono::seconds(600));

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual ChatResponse chat(const ChatRequest& request) = 0;
};

struct GatewayConfig {
  std::string base_url = "https://api.openai.com";
  std::string api_key;
  int max_attempts = 5;
  std::chrono::milliseconds backoff_base{1000};
  double backoff_factor = 2.0;

  /// LLM_API_KEY and LLM_BASE_URL (base URL keeps its default when unset).
  static GatewayConfig from_env();
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

/// Talks to the endpoint through `transport`. Retries transport failures,
/// 429 and 5xx with exponential backoff; RateLimited when 429 persists,
/// TransportError for other failures. AuthMissing before any call when the
/// key is empty.
class LiveClient : public ChatClient {
 public:
  LiveClient(GatewayConfig config, std::shared_ptr<HttpTransport> transport,
             Sleeper sleeper = {});
  ChatResponse chat(const ChatRequest& request) override;

 private:
  GatewayConfig config_;
  std::shared_ptr<HttpTransport> transport_;
  Sleeper sleeper_;
};

enum class Mode { kLive, kRecord, kReplay };

std::string_view to_string(Mode mode);
/// Throws InvalidArgument.
Mode parse_mode(std::string_view name);

/// Record mode forwards to `inner` and appends {request_hash, request,
/// response} lines to the store. Replay mode serves the store only; repeated
/// requests get their recorded responses in order and a miss throws
/// ReplayMiss. Live mode forwards. With a transcript path every exchange is
/// also appended there, identically in record and replay mode.
class RecordReplayClient : public ChatClient {
 public:
  RecordReplayClient(Mode mode, std::filesystem::path store, std::shared_ptr<ChatClient> inner,
                     std::filesystem::path transcript = {});
  ChatResponse chat(const ChatRequest& request) override;

  Mode mode() const { return mode_; }

 private:
  void append_transcript(const ChatRequest& request, const ChatResponse& response);

  Mode mode_;
  std::filesystem::path store_;
  std::filesystem::path transcript_;
  std::shared_ptr<ChatClient> inner_;
  std::mutex mutex_;
  std::map<std::string, std::deque<ChatResponse>> replay_;
};

/// Convenience: a live client over httplib, wrapped for record/replay when
/// the mode asks for it. Replay never builds a network client.
std::shared_ptr<ChatClient> make_client(Mode mode, const std::filesystem::path& store,
                                        const std::filesystem::path& transcript = {},
                                        std::optional<GatewayConfig> config = std::nullopt);

}  // namespace difftune::gateway
