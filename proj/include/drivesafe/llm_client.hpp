#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "drivesafe/prompting.hpp"

namespace drivesafe::llm {

// Remote-model configuration. base_url accepts http(s)://host[:port][/prefix]
// for OpenAI-compatible chat-completion services, or mock://<fixtures.json>
// for the deterministic offline backend.
struct LlmEndpoint {
  std::string base_url;
  std::string model_name;
  std::string api_key;
  double timeout_seconds = 30.0;
  int max_retries = 3;
  double temperature = 0.0;
  int max_tokens = 512;
  double retry_base_seconds = 1.0;  // exponential backoff base

  void validate() const;

  // Fills empty fields from DRIVESAFE_LLM_URL / DRIVESAFE_LLM_KEY /
  // DRIVESAFE_LLM_MODEL.
  void apply_env();
};

enum class LlmStatus {
  Ok,
  Timeout,
  RateLimited,
  AuthFailed,
  MalformedResponse,
  TransportError,
  HttpError,
};

const char* to_string(LlmStatus s);

struct CompletionResult {
  LlmStatus status = LlmStatus::Ok;
  std::string text;
  long prompt_tokens = 0;      // 0 when the server omits usage
  long completion_tokens = 0;  // 0 when the server omits usage
  std::string error;
  int attempts = 0;

  bool ok() const { return status == LlmStatus::Ok; }
};

// Shareable across threads; each complete() call is independent.
class Client {
 public:
  virtual ~Client() = default;
  virtual CompletionResult complete(const prompting::PromptMessages& prompt) = 0;
};

// Stable FNV-1a 64 over the canonicalized (role, text) message list; the key
// used by the mock fixture map, printed as 16 lowercase hex digits.
std::uint64_t prompt_hash(const prompting::PromptMessages& prompt);
std::string prompt_hash_hex(const prompting::PromptMessages& prompt);

// Deterministic offline backend. Fixture file schema (docs/formats.md):
//   {"default": "...", "fixtures": {"<hex64>": "..."},
//    "contains": [{"substring": "...", "text": "..."}]}
class MockClient : public Client {
 public:
  explicit MockClient(const std::filesystem::path& fixtures_path);
  CompletionResult complete(const prompting::PromptMessages& prompt) override;

 private:
  struct ContainsRule {
    std::string substring;
    std::string text;
  };
  std::unordered_map<std::string, std::string> fixtures_;
  std::vector<ContainsRule> contains_;
  std::string default_text_;
};

// POSTs /v1/chat/completions with retry/backoff on transport errors and
// HTTP 429/5xx; 4xx other than 429 never retries.
class HttpClient : public Client {
 public:
  explicit HttpClient(LlmEndpoint endpoint);
  CompletionResult complete(const prompting::PromptMessages& prompt) override;

 private:
  LlmEndpoint endpoint_;
  bool https_ = false;
  std::string host_;
  int port_ = 80;
  std::string path_prefix_;
};

// Dispatches on the base_url scheme.
std::unique_ptr<Client> make_client(const LlmEndpoint& endpoint);

// Completes all prompts with at most max_in_flight requests outstanding.
// Results align positionally with the prompts; per-item failures stay
// in-place and never abort the batch.
std::vector<CompletionResult> complete_batch(Client& client,
                                             const std::vector<prompting::PromptMessages>& prompts,
                                             int max_in_flight);

}  // namespace drivesafe::llm
