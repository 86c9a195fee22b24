#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "physforge/corpus.hpp"
#include "physforge/util/jsonl.hpp"

namespace physforge {

enum class PromptStyle { Deepseek, KiminaGoedel, ProprietaryCot, ConjectureGen };

std::string to_string(PromptStyle s);
PromptStyle prompt_style_from_string(std::string_view s);

struct ProverEndpoint {
  std::string name;
  std::string base_url;      // http(s)://..., or mock://<fixture.json>
  std::string model_id;
  std::string api_key_env;   // env var holding the bearer token; may be empty
  PromptStyle style = PromptStyle::Deepseek;
  int max_new_tokens = 4096;
  double temperature = 1.0;
  double request_timeout = 120.0;
  bool supports_logprobs = false;
};

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;  // natural log

  bool operator==(const TokenLogprob&) const = default;
};

struct ProofAttempt {
  std::string theorem_id;
  int attempt_index = 0;
  std::string completion;
  std::string finish_reason;
  std::optional<std::vector<TokenLogprob>> token_logprobs;
  std::string prover_name;
};

// ---------------------------------------------------------------------------
// Prompt rendering.

/// A prompt template with named placeholders. Prover styles use
/// {doc_comment}, {header} and {statement}; the conjecture style uses
/// {context}, {nq}, {theorem} and {k}. Rendering with all placeholders bound
/// leaves no residual markers.
struct PromptTemplate {
  PromptStyle style = PromptStyle::Deepseek;
  std::string template_text;
};

const PromptTemplate& prompt_template_for(PromptStyle style);

/// Renders the full prompt for a record, special tokens included. Prover
/// styles end with the assistant turn pre-filled up to the statement's `:=`
/// so the model emits only the proof continuation. Requires a nonempty
/// header and statement.
std::string render_prompt(const TheoremRecord& record, PromptStyle style);

/// Renders a custom template against a record (k is only used by the
/// conjecture style).
std::string render_template(const PromptTemplate& tmpl,
                            const TheoremRecord& record, int k = 10);

/// Conjecture-generation prompt over a seed record; `k` is the number of
/// conjectures requested.
std::string render_conjecture_prompt(const TheoremRecord& seed, int k);

// ---------------------------------------------------------------------------
// Transport.

struct ChatChoice {
  std::string text;
  std::string finish_reason;
  std::optional<std::vector<TokenLogprob>> logprobs;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  /// Returns up to n independent samples. Throws TransportError on
  /// network-level failures and ConfigError on auth/request problems.
  virtual std::vector<ChatChoice> complete(const ProverEndpoint& ep,
                                           const std::string& prompt, int n,
                                           bool want_logprobs) = 0;
};

/// Chat-completions HTTP client (POST {base_url}/v1/chat/completions).
std::shared_ptr<ChatBackend> make_http_backend();

/// Canned backend driven by a responder callback; used for hermetic runs.
class MockChatBackend : public ChatBackend {
 public:
  using Responder = std::function<std::vector<ChatChoice>(
      const ProverEndpoint&, const std::string& prompt, int n,
      bool want_logprobs)>;

  explicit MockChatBackend(Responder responder)
      : responder_(std::move(responder)) {}

  std::vector<ChatChoice> complete(const ProverEndpoint& ep,
                                   const std::string& prompt, int n,
                                   bool want_logprobs) override {
    return responder_(ep, prompt, n, want_logprobs);
  }

  /// Every sample is the same fixed text.
  static std::shared_ptr<MockChatBackend> fixed(std::string text,
                                                std::string finish_reason = "stop");

 private:
  Responder responder_;
};

/// Reads a mock fixture (JSON with a "choices" array, cycled per request).
std::shared_ptr<ChatBackend> make_mock_backend_from_file(const std::string& path);

/// Picks the backend for an endpoint: mock:// fixtures or HTTP.
std::shared_ptr<ChatBackend> make_backend_for(const ProverEndpoint& ep);

/// Dispatches per endpoint base_url, so one backend instance can serve a
/// mixed set of endpoints (including several mock fixtures).
std::shared_ptr<ChatBackend> make_routing_backend();

// ---------------------------------------------------------------------------
// Sampling.

struct SamplerOptions {
  int max_retries = 3;           // on transport/5xx errors only
  double backoff_seconds = 0.5;  // doubled per retry
};

/// n independent proof samples for a record. Exhausted retries produce
/// placeholder attempts with empty completions and a "transport_failure"
/// finish reason; those count as unverified downstream.
std::vector<ProofAttempt> sample_proofs(ChatBackend& backend,
                                        const ProverEndpoint& ep,
                                        const TheoremRecord& record, int n,
                                        const SamplerOptions& opts = {});

/// As sample_proofs over a raw prompt, with token logprobs mandatory.
/// Throws ConfigError before any request when the endpoint lacks logprob
/// support, and std::invalid_argument when n < 1.
std::vector<ProofAttempt> complete_with_logprobs(ChatBackend& backend,
                                                 const ProverEndpoint& ep,
                                                 const std::string& prompt_id,
                                                 const std::string& prompt, int n,
                                                 const SamplerOptions& opts = {});

/// Near-even split of n over k endpoints; the remainder goes to the earliest
/// endpoints in configuration order. Budgets always sum to n.
std::vector<int> split_budget(int n, std::size_t endpoint_count);

/// Pulls a Lean proof body (`:= ...`) out of a model completion, handling
/// both bare continuations of a pre-filled prompt and completions that
/// restate the whole declaration inside a fenced code block.
std::string extract_proof_candidate(const std::string& completion);

// ---------------------------------------------------------------------------
// Config and serialization.

std::vector<ProverEndpoint> endpoints_from_json(const Json& j);
std::vector<ProverEndpoint> load_endpoints(const std::string& path);

Json attempt_to_json(const ProofAttempt& a);
ProofAttempt attempt_from_json(const Json& j);

void save_attempts(const std::string& path, const std::vector<ProofAttempt>& attempts);
std::vector<ProofAttempt> load_attempts(const std::string& path);

}  // namespace physforge
