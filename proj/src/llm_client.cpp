#include "drivesafe/llm_client.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "httplib.h"

namespace drivesafe::llm {

using json = nlohmann::json;

namespace {

const char* role_name(prompting::Role role) {
  return role == prompting::Role::System ? "system" : "user";
}

json messages_to_json(const prompting::PromptMessages& prompt) {
  json out = json::array();
  for (const auto& m : prompt.messages) {
    out.push_back({{"role", role_name(m.role)}, {"content", m.text}});
  }
  return out;
}

double jittered_delay(double base, int attempt) {
  thread_local std::mt19937 rng{std::random_device{}()};
  std::uniform_real_distribution<double> jitter(1.0, 1.25);
  return base * std::pow(2.0, attempt) * jitter(rng);
}

}  // namespace

void LlmEndpoint::validate() const {
  if (base_url.empty()) throw std::invalid_argument("endpoint base_url is empty");
  if (timeout_seconds <= 0.0) throw std::invalid_argument("endpoint timeout must be positive");
  if (max_retries < 0 || max_retries > 10) throw std::invalid_argument("max_retries must be in [0, 10]");
  if (temperature < 0.0) throw std::invalid_argument("temperature must be >= 0");
  if (max_tokens < 1) throw std::invalid_argument("max_tokens must be >= 1");
}

void LlmEndpoint::apply_env() {
  if (base_url.empty()) {
    if (const char* v = std::getenv("DRIVESAFE_LLM_URL")) base_url = v;
  }
  if (api_key.empty()) {
    if (const char* v = std::getenv("DRIVESAFE_LLM_KEY")) api_key = v;
  }
  if (model_name.empty()) {
    if (const char* v = std::getenv("DRIVESAFE_LLM_MODEL")) model_name = v;
  }
}

const char* to_string(LlmStatus s) {
  switch (s) {
    case LlmStatus::Ok: return "ok";
    case LlmStatus::Timeout: return "timeout";
    case LlmStatus::RateLimited: return "rate_limited";
    case LlmStatus::AuthFailed: return "auth_failed";
    case LlmStatus::MalformedResponse: return "malformed_response";
    case LlmStatus::TransportError: return "transport_error";
    default: return "http_error";
  }
}

std::uint64_t prompt_hash(const prompting::PromptMessages& prompt) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
  };
  for (const auto& m : prompt.messages) {
    mix(role_name(m.role));
    mix("\x1f");
    mix(m.text);
    mix("\x1e");
  }
  return h;
}

std::string prompt_hash_hex(const prompting::PromptMessages& prompt) {
  std::ostringstream out;
  out << std::hex << std::setfill('0') << std::setw(16) << prompt_hash(prompt);
  return out.str();
}

MockClient::MockClient(const std::filesystem::path& fixtures_path) {
  std::ifstream in(fixtures_path);
  if (!in) throw std::runtime_error("cannot open mock fixtures: " + fixtures_path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(fixtures_path.string() + ": " + e.what());
  }
  if (j.contains("default")) default_text_ = j.at("default").get<std::string>();
  if (j.contains("fixtures")) {
    for (const auto& [key, value] : j.at("fixtures").items()) {
      fixtures_[key] = value.get<std::string>();
    }
  }
  if (j.contains("contains")) {
    for (const auto& rule : j.at("contains")) {
      contains_.push_back({rule.at("substring").get<std::string>(), rule.at("text").get<std::string>()});
    }
  }
}

CompletionResult MockClient::complete(const prompting::PromptMessages& prompt) {
  CompletionResult out;
  out.attempts = 1;
  const std::string key = prompt_hash_hex(prompt);
  if (auto it = fixtures_.find(key); it != fixtures_.end()) {
    out.text = it->second;
    return out;
  }
  std::string all;
  for (const auto& m : prompt.messages) {
    all += m.text;
    all.push_back('\n');
  }
  for (const auto& rule : contains_) {
    if (all.find(rule.substring) != std::string::npos) {
      out.text = rule.text;
      return out;
    }
  }
  out.text = default_text_;
  return out;
}

HttpClient::HttpClient(LlmEndpoint endpoint) : endpoint_(std::move(endpoint)) {
  endpoint_.validate();
  std::string rest;
  if (endpoint_.base_url.rfind("https://", 0) == 0) {
    https_ = true;
    port_ = 443;
    rest = endpoint_.base_url.substr(8);
  } else if (endpoint_.base_url.rfind("http://", 0) == 0) {
    https_ = false;
    port_ = 80;
    rest = endpoint_.base_url.substr(7);
  } else {
    throw std::invalid_argument("unsupported URL scheme in " + endpoint_.base_url);
  }
  const auto slash = rest.find('/');
  std::string host_port = slash == std::string::npos ? rest : rest.substr(0, slash);
  if (slash != std::string::npos) {
    path_prefix_ = rest.substr(slash);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  }
  const auto colon = host_port.find(':');
  if (colon != std::string::npos) {
    host_ = host_port.substr(0, colon);
    port_ = std::stoi(host_port.substr(colon + 1));
  } else {
    host_ = host_port;
  }
  if (host_.empty()) throw std::invalid_argument("no host in " + endpoint_.base_url);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (https_) {
    throw std::invalid_argument("built without TLS support; use an http:// endpoint");
  }
#endif
}

CompletionResult HttpClient::complete(const prompting::PromptMessages& prompt) {
  json body;
  body["model"] = endpoint_.model_name;
  body["messages"] = messages_to_json(prompt);
  body["temperature"] = endpoint_.temperature;
  body["max_tokens"] = endpoint_.max_tokens;
  const std::string payload = body.dump();
  const std::string path = path_prefix_ + "/v1/chat/completions";

  CompletionResult out;
  for (int attempt = 0; attempt <= endpoint_.max_retries; ++attempt) {
    out.attempts = attempt + 1;
    if (attempt > 0) {
      const double delay = jittered_delay(endpoint_.retry_base_seconds, attempt - 1);
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }

    httplib::Result res = [&] {
      httplib::Headers headers;
      if (!endpoint_.api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + endpoint_.api_key);
      }
      const auto timeout = std::chrono::duration<double>(endpoint_.timeout_seconds);
      const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
      const auto usecs =
          std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
#ifdef CPPHTTPLIB_OPENSSL_SUPPORT
      if (https_) {
        httplib::SSLClient cli(host_, port_);
        cli.set_connection_timeout(secs.count(), usecs.count());
        cli.set_read_timeout(secs.count(), usecs.count());
        return cli.Post(path, headers, payload, "application/json");
      }
#endif
      httplib::Client cli(host_, port_);
      cli.set_connection_timeout(secs.count(), usecs.count());
      cli.set_read_timeout(secs.count(), usecs.count());
      return cli.Post(path, headers, payload, "application/json");
    }();

    if (!res) {
      const auto err = res.error();
      const bool timed_out =
          err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read;
      out.status = timed_out ? LlmStatus::Timeout : LlmStatus::TransportError;
      out.error = httplib::to_string(err);
      continue;  // transport errors retry
    }

    const int code = res->status;
    if (code == 401 || code == 403) {
      out.status = LlmStatus::AuthFailed;
      out.error = "HTTP " + std::to_string(code);
      return out;
    }
    if (code == 429 || code >= 500) {
      out.status = code == 429 ? LlmStatus::RateLimited : LlmStatus::HttpError;
      out.error = "HTTP " + std::to_string(code);
      continue;  // retryable
    }
    if (code != 200) {
      out.status = LlmStatus::HttpError;
      out.error = "HTTP " + std::to_string(code);
      return out;
    }

    try {
      const json reply = json::parse(res->body);
      const auto& choices = reply.at("choices");
      if (!choices.is_array() || choices.empty()) throw std::runtime_error("no choices");
      out.text = choices[0].at("message").at("content").get<std::string>();
      if (reply.contains("usage")) {
        out.prompt_tokens = reply["usage"].value("prompt_tokens", 0L);
        out.completion_tokens = reply["usage"].value("completion_tokens", 0L);
      }
      out.status = LlmStatus::Ok;
      out.error.clear();
      return out;
    } catch (const std::exception& e) {
      out.status = LlmStatus::MalformedResponse;
      out.error = std::string("bad completion payload: ") + e.what();
      return out;  // malformed body is not a transport problem; no retry
    }
  }
  return out;  // last retryable failure
}

std::unique_ptr<Client> make_client(const LlmEndpoint& endpoint) {
  constexpr std::string_view mock_scheme = "mock://";
  if (endpoint.base_url.rfind(mock_scheme, 0) == 0) {
    return std::make_unique<MockClient>(endpoint.base_url.substr(mock_scheme.size()));
  }
  return std::make_unique<HttpClient>(endpoint);
}

std::vector<CompletionResult> complete_batch(Client& client,
                                             const std::vector<prompting::PromptMessages>& prompts,
                                             int max_in_flight) {
  if (max_in_flight < 1) throw std::invalid_argument("max_in_flight must be >= 1");
  std::vector<CompletionResult> results(prompts.size());
  if (prompts.empty()) return results;

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= prompts.size()) return;
      try {
        results[i] = client.complete(prompts[i]);
      } catch (const std::exception& e) {
        results[i].status = LlmStatus::TransportError;
        results[i].error = e.what();
      }
    }
  };

  const std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(max_in_flight),
                                                      prompts.size());
  std::vector<std::thread> threads;
  threads.reserve(n_workers);
  for (std::size_t i = 0; i < n_workers; ++i) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  return results;
}

}  // namespace drivesafe::llm
