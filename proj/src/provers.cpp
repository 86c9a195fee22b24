#include "physforge/provers.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "physforge/errors.hpp"
#include "physforge/log.hpp"
#include "physforge/util/strings.hpp"
#include "physforge/verifier.hpp"

namespace physforge {

std::string to_string(PromptStyle s) {
  switch (s) {
    case PromptStyle::Deepseek: return "deepseek";
    case PromptStyle::KiminaGoedel: return "kimina_goedel";
    case PromptStyle::ProprietaryCot: return "proprietary_cot";
    case PromptStyle::ConjectureGen: return "conjecture_gen";
  }
  return "deepseek";
}

PromptStyle prompt_style_from_string(std::string_view s) {
  if (s == "deepseek") return PromptStyle::Deepseek;
  if (s == "kimina_goedel") return PromptStyle::KiminaGoedel;
  if (s == "proprietary_cot") return PromptStyle::ProprietaryCot;
  if (s == "conjecture_gen") return PromptStyle::ConjectureGen;
  throw ConfigError("unknown prompt style: " + std::string(s));
}

// ---------------------------------------------------------------------------
// Prompt rendering.

namespace {

// The prover templates end with the assistant turn pre-filled through the
// statement's `:=`; the user turn restates the declaration terminated by
// `sorry`. {statement} carries the doc comment and attributes along with the
// signature.
const PromptTemplate kDeepseekTemplate{
    PromptStyle::Deepseek,
    "<|begin_of_sentence|>You are an expert in mathematics, physics and Lean 4.\n"
    "<|User|>Think about and solve the following problem step by step in "
    "Lean 4. -> Directly give the formal statement in Lean 4.\n"
    "\n"
    "# Problem: {doc_comment}\n"
    "# Formal statement:\n"
    "```lean4\n"
    "{header}\n"
    "\n"
    "{statement} :=\n"
    "  sorry\n"
    "```\n"
    "\n"
    "<|Assistant|>\n"
    "```lean4\n"
    "{header}\n"
    "\n"
    "{statement} :=\n"};

const PromptTemplate kKiminaGoedelTemplate{
    PromptStyle::KiminaGoedel,
    "<|im_start|>system\n"
    "You are an expert in mathematics, physics and Lean 4.<|im_end|>\n"
    "<|im_start|>user\n"
    "Think about and solve the following problem step by step in Lean 4. -> "
    "Directly give the formal statement in Lean 4.\n"
    "\n"
    "# Problem: {doc_comment}\n"
    "# Formal statement:\n"
    "```lean4\n"
    "{header}\n"
    "\n"
    "{statement} :=\n"
    "  sorry\n"
    "```<|im_end|>\n"
    "<|im_start|>assistant\n"
    "```lean4\n"
    "{header}\n"
    "\n"
    "{statement} :=\n"};

const PromptTemplate kProprietaryCotTemplate{
    PromptStyle::ProprietaryCot,
    "Complete the following Lean 4 code:\n"
    "\n"
    "```lean4\n"
    "{header}\n"
    "\n"
    "{statement} :=\n"
    "  sorry\n"
    "```\n"
    "\n"
    "Before producing the Lean 4 code to formally prove the given theorem, "
    "provide a proof plan outlining the main proof steps and strategies.\n"
    "\n"
    "The plan should highlight key ideas, intermediate lemmas, and proof "
    "structures that will guide the construction of the final formal proof.\n"};

const PromptTemplate kConjectureGenTemplate{
    PromptStyle::ConjectureGen,
    "You are an expert in mathematics, physics and Lean 4.\n"
    "You are provided a context, a lemma, and a proof. Your task is to "
    "generate a list of {k} related physics conjecture in formal language "
    "based on the context and the seed language statements.\n"
    "\n"
    "The conjectures should be:\n"
    "1. A meaningful variant of the original theorem: modify hypotheses, "
    "generalize structures, or extend scope while keeping the core "
    "mathematical insight.\n"
    "2. Must differ significantly in mathematical content (changed "
    "assumptions, stronger/weaker conclusions, or different algebraic "
    "structures) but remain recognizably related.\n"
    "3. The new conjecture should be in formal language.\n"
    "4. Do not include the proof.\n"
    "\n"
    "When generating the conjectures, preserve all specific Lean identifiers "
    "exactly as they appear in the formal statement. You can also refer to "
    "the original formal statement.\n"
    "\n"
    "Context:\n"
    "{context}\n"
    "\n"
    "Natural Language Statement:\n"
    "{nq}\n"
    "\n"
    "Original Formal Statement:\n"
    "{theorem}\n"
    "\n"
    "Return the final conjectures in JSON format as a dictionary where:\n"
    "- The key is \"conjectures\"\n"
    "- The value is a list of dictionaries\n"
    "- Each dictionary in the list has a key \"statement\" whose value is a "
    "string containing one conjecture\n"
    "\n"
    "Please read, understand, and then generate a list of conjectures.\n"};

std::string doc_comment_inner(const std::string& doc) {
  std::string_view s = trim(doc);
  if (s.size() >= 3 && s.substr(0, 3) == "/--") s = s.substr(3);
  if (s.size() >= 2 && s.substr(s.size() - 2) == "-/") {
    s = s.substr(0, s.size() - 2);
  }
  return std::string(trim(s));
}

std::string problem_description(const TheoremRecord& record) {
  if (record.doc_comment) {
    const std::string inner = doc_comment_inner(*record.doc_comment);
    if (!inner.empty()) return inner;
  }
  const std::string name = statement_decl_name(record.statement);
  return name.empty() ? std::string(trim(record.statement)) : name;
}

// Doc comment block + attributes + signature, as it appears in the fences.
std::string statement_with_doc(const TheoremRecord& record) {
  std::string out;
  if (record.doc_comment && !trim(*record.doc_comment).empty()) {
    out += std::string(trim(*record.doc_comment));
    out += "\n";
  }
  out += strip_sorry_suffix(record.statement);
  return out;
}

}  // namespace

const PromptTemplate& prompt_template_for(PromptStyle style) {
  switch (style) {
    case PromptStyle::Deepseek: return kDeepseekTemplate;
    case PromptStyle::KiminaGoedel: return kKiminaGoedelTemplate;
    case PromptStyle::ProprietaryCot: return kProprietaryCotTemplate;
    case PromptStyle::ConjectureGen: return kConjectureGenTemplate;
  }
  throw ConfigError("prompt_template_for: unhandled style");
}

std::string render_template(const PromptTemplate& tmpl,
                            const TheoremRecord& record, int k) {
  if (trim(record.statement).empty()) {
    throw std::invalid_argument("render_template: statement must be nonempty");
  }
  if (trim(record.header).empty()) {
    throw std::invalid_argument("render_template: header must be nonempty");
  }
  std::string out = tmpl.template_text;
  if (tmpl.style == PromptStyle::ConjectureGen) {
    if (k < 1) {
      throw std::invalid_argument("render_template: k must be >= 1");
    }
    out = replace_all(std::move(out), "{k}", std::to_string(k));
    out = replace_all(std::move(out), "{context}",
                      std::string(rtrim(record.header)));
    out = replace_all(std::move(out), "{nq}", problem_description(record));
    out = replace_all(std::move(out), "{theorem}",
                      std::string(trim(record.statement)));
    return out;
  }
  out = replace_all(std::move(out), "{doc_comment}", problem_description(record));
  out = replace_all(std::move(out), "{header}",
                    std::string(rtrim(record.header)));
  out = replace_all(std::move(out), "{statement}", statement_with_doc(record));
  return out;
}

std::string render_prompt(const TheoremRecord& record, PromptStyle style) {
  return render_template(prompt_template_for(style), record);
}

std::string render_conjecture_prompt(const TheoremRecord& seed, int k) {
  return render_template(kConjectureGenTemplate, seed, k);
}

// ---------------------------------------------------------------------------
// HTTP backend.

namespace {

struct UrlParts {
  std::string host;  // scheme://host[:port]
  std::string path_prefix;
};

UrlParts parse_base_url(const std::string& base_url) {
  UrlParts parts;
  const std::size_t scheme = base_url.find("://");
  const std::size_t path_start =
      scheme == std::string::npos ? base_url.find('/')
                                  : base_url.find('/', scheme + 3);
  if (path_start == std::string::npos) {
    parts.host = base_url;
  } else {
    parts.host = base_url.substr(0, path_start);
    parts.path_prefix = base_url.substr(path_start);
    while (!parts.path_prefix.empty() && parts.path_prefix.back() == '/') {
      parts.path_prefix.pop_back();
    }
  }
  return parts;
}

std::optional<std::vector<TokenLogprob>> parse_choice_logprobs(const Json& choice) {
  if (!choice.contains("logprobs") || choice.at("logprobs").is_null()) {
    return std::nullopt;
  }
  const Json& lp = choice.at("logprobs");
  if (!lp.contains("content") || !lp.at("content").is_array()) {
    return std::nullopt;
  }
  std::vector<TokenLogprob> out;
  for (const Json& tok : lp.at("content")) {
    TokenLogprob t;
    t.token = tok.value("token", std::string());
    t.logprob = tok.value("logprob", 0.0);
    out.push_back(std::move(t));
  }
  return out;
}

class HttpChatBackend : public ChatBackend {
 public:
  std::vector<ChatChoice> complete(const ProverEndpoint& ep,
                                   const std::string& prompt, int n,
                                   bool want_logprobs) override {
    std::string api_key;
    if (!ep.api_key_env.empty()) {
      const char* value = std::getenv(ep.api_key_env.c_str());
      if (value == nullptr || *value == '\0') {
        throw ConfigError("endpoint '" + ep.name +
                          "': API key environment variable not set: " +
                          ep.api_key_env);
      }
      api_key = value;
    }

    const UrlParts url = parse_base_url(ep.base_url);
    httplib::Client client(url.host);
    client.set_connection_timeout(
        std::chrono::milliseconds(static_cast<int>(ep.request_timeout * 1000)));
    client.set_read_timeout(
        std::chrono::milliseconds(static_cast<int>(ep.request_timeout * 1000)));

    Json body;
    body["model"] = ep.model_id;
    body["messages"] = Json::array({Json{{"role", "user"}, {"content", prompt}}});
    body["n"] = n;
    body["temperature"] = ep.temperature;
    body["max_tokens"] = ep.max_new_tokens;
    if (want_logprobs) body["logprobs"] = true;

    httplib::Headers headers;
    if (!api_key.empty()) {
      headers.emplace("Authorization", "Bearer " + api_key);
    }

    const auto result =
        client.Post(url.path_prefix + "/v1/chat/completions", headers,
                    body.dump(), "application/json");
    if (!result) {
      throw TransportError("endpoint '" + ep.name + "': " +
                           httplib::to_string(result.error()));
    }
    if (result->status == 401 || result->status == 403) {
      throw ConfigError("endpoint '" + ep.name +
                        "': authentication rejected (check " + ep.api_key_env +
                        ")");
    }
    if (result->status >= 500) {
      throw TransportError("endpoint '" + ep.name + "': server error " +
                           std::to_string(result->status));
    }
    if (result->status >= 400) {
      throw ConfigError("endpoint '" + ep.name + "': request rejected (" +
                        std::to_string(result->status) + "): " + result->body);
    }

    Json reply;
    try {
      reply = Json::parse(result->body);
    } catch (const Json::parse_error& e) {
      throw TransportError("endpoint '" + ep.name +
                           "': unparseable response: " + e.what());
    }

    std::vector<ChatChoice> choices;
    for (const Json& c : reply.value("choices", Json::array())) {
      ChatChoice choice;
      if (c.contains("message")) {
        choice.text = c.at("message").value("content", std::string());
      } else {
        choice.text = c.value("text", std::string());
      }
      choice.finish_reason = c.value("finish_reason", std::string("stop"));
      choice.logprobs = parse_choice_logprobs(c);
      choices.push_back(std::move(choice));
    }
    return choices;
  }
};

}  // namespace

std::shared_ptr<ChatBackend> make_http_backend() {
  return std::make_shared<HttpChatBackend>();
}

std::shared_ptr<MockChatBackend> MockChatBackend::fixed(std::string text,
                                                        std::string finish_reason) {
  return std::make_shared<MockChatBackend>(
      [text = std::move(text), finish_reason = std::move(finish_reason)](
          const ProverEndpoint&, const std::string&, int n, bool) {
        std::vector<ChatChoice> choices(static_cast<std::size_t>(n));
        for (auto& c : choices) {
          c.text = text;
          c.finish_reason = finish_reason;
        }
        return choices;
      });
}

std::shared_ptr<ChatBackend> make_mock_backend_from_file(const std::string& path) {
  const Json spec = Json::parse(read_file(path));
  std::vector<ChatChoice> pool;
  for (const Json& c : spec.value("choices", Json::array())) {
    ChatChoice choice;
    choice.text = c.value("text", std::string());
    choice.finish_reason = c.value("finish_reason", std::string("stop"));
    if (c.contains("token_logprobs")) {
      std::vector<TokenLogprob> lps;
      for (const Json& pair : c.at("token_logprobs")) {
        lps.push_back({pair.at(0).get<std::string>(), pair.at(1).get<double>()});
      }
      choice.logprobs = std::move(lps);
    }
    pool.push_back(std::move(choice));
  }
  if (pool.empty()) {
    throw ConfigError("mock fixture has no choices: " + path);
  }
  auto cursor = std::make_shared<std::atomic<std::size_t>>(0);
  return std::make_shared<MockChatBackend>(
      [pool, cursor](const ProverEndpoint&, const std::string&, int n, bool) {
        std::vector<ChatChoice> out;
        out.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
          out.push_back(pool[cursor->fetch_add(1) % pool.size()]);
        }
        return out;
      });
}

std::shared_ptr<ChatBackend> make_backend_for(const ProverEndpoint& ep) {
  constexpr std::string_view kMockScheme = "mock://";
  if (ep.base_url.rfind(kMockScheme, 0) == 0) {
    return make_mock_backend_from_file(
        ep.base_url.substr(kMockScheme.size()));
  }
  return make_http_backend();
}

namespace {

class RoutingChatBackend : public ChatBackend {
 public:
  std::vector<ChatChoice> complete(const ProverEndpoint& ep,
                                   const std::string& prompt, int n,
                                   bool want_logprobs) override {
    std::shared_ptr<ChatBackend> backend;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      auto it = by_url_.find(ep.base_url);
      if (it == by_url_.end()) {
        it = by_url_.emplace(ep.base_url, make_backend_for(ep)).first;
      }
      backend = it->second;
    }
    return backend->complete(ep, prompt, n, want_logprobs);
  }

 private:
  std::mutex mutex_;
  std::unordered_map<std::string, std::shared_ptr<ChatBackend>> by_url_;
};

}  // namespace

std::shared_ptr<ChatBackend> make_routing_backend() {
  return std::make_shared<RoutingChatBackend>();
}

// ---------------------------------------------------------------------------
// Sampling.

namespace {

std::vector<ChatChoice> complete_with_retries(ChatBackend& backend,
                                              const ProverEndpoint& ep,
                                              const std::string& prompt, int n,
                                              bool want_logprobs,
                                              const SamplerOptions& opts) {
  double backoff = opts.backoff_seconds;
  for (int attempt = 0;; ++attempt) {
    try {
      return backend.complete(ep, prompt, n, want_logprobs);
    } catch (const TransportError& e) {
      if (attempt >= opts.max_retries) throw;
      log_warn(std::string(e.what()) + " (retrying)");
      if (backoff > 0) {
        std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
        backoff *= 2;
      }
    }
  }
}

std::vector<ProofAttempt> choices_to_attempts(const std::vector<ChatChoice>& choices,
                                              const std::string& theorem_id,
                                              const std::string& prover_name,
                                              int n) {
  std::vector<ProofAttempt> attempts;
  attempts.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n && i < static_cast<int>(choices.size()); ++i) {
    ProofAttempt a;
    a.theorem_id = theorem_id;
    a.attempt_index = i;
    a.completion = choices[static_cast<std::size_t>(i)].text;
    a.finish_reason = choices[static_cast<std::size_t>(i)].finish_reason;
    a.token_logprobs = choices[static_cast<std::size_t>(i)].logprobs;
    a.prover_name = prover_name;
    attempts.push_back(std::move(a));
  }
  return attempts;
}

std::vector<ProofAttempt> transport_failure_attempts(const std::string& theorem_id,
                                                     const std::string& prover_name,
                                                     int n) {
  std::vector<ProofAttempt> attempts(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    attempts[static_cast<std::size_t>(i)].theorem_id = theorem_id;
    attempts[static_cast<std::size_t>(i)].attempt_index = i;
    attempts[static_cast<std::size_t>(i)].finish_reason = "transport_failure";
    attempts[static_cast<std::size_t>(i)].prover_name = prover_name;
  }
  return attempts;
}

}  // namespace

std::vector<ProofAttempt> sample_proofs(ChatBackend& backend,
                                        const ProverEndpoint& ep,
                                        const TheoremRecord& record, int n,
                                        const SamplerOptions& opts) {
  if (n < 1) {
    throw std::invalid_argument("sample_proofs: n must be >= 1");
  }
  const std::string prompt = render_prompt(record, ep.style);
  try {
    const auto choices =
        complete_with_retries(backend, ep, prompt, n, ep.supports_logprobs, opts);
    auto attempts = choices_to_attempts(choices, record.id, ep.name, n);
    if (!ep.supports_logprobs) {
      for (auto& a : attempts) a.token_logprobs.reset();
    }
    return attempts;
  } catch (const TransportError& e) {
    log_warn("sampling failed for " + record.id + ": " + e.what());
    return transport_failure_attempts(record.id, ep.name, n);
  }
}

std::vector<ProofAttempt> complete_with_logprobs(ChatBackend& backend,
                                                 const ProverEndpoint& ep,
                                                 const std::string& prompt_id,
                                                 const std::string& prompt, int n,
                                                 const SamplerOptions& opts) {
  if (n < 1) {
    throw std::invalid_argument("complete_with_logprobs: n must be >= 1");
  }
  if (!ep.supports_logprobs) {
    throw ConfigError("endpoint '" + ep.name + "' does not support logprobs");
  }
  try {
    const auto choices =
        complete_with_retries(backend, ep, prompt, n, /*want_logprobs=*/true, opts);
    return choices_to_attempts(choices, prompt_id, ep.name, n);
  } catch (const TransportError& e) {
    log_warn("logprob sampling failed for " + prompt_id + ": " + e.what());
    return transport_failure_attempts(prompt_id, ep.name, n);
  }
}

std::vector<int> split_budget(int n, std::size_t endpoint_count) {
  if (endpoint_count == 0) {
    throw ConfigError("split_budget: need at least one endpoint");
  }
  const int k = static_cast<int>(endpoint_count);
  std::vector<int> budgets(endpoint_count, n / k);
  for (int i = 0; i < n % k; ++i) ++budgets[static_cast<std::size_t>(i)];
  return budgets;
}

// ---------------------------------------------------------------------------
// Completion post-processing.

namespace {

// Content of the last ```lean fenced block, if any.
std::optional<std::string> last_lean_fence(const std::string& text) {
  std::optional<std::string> found;
  std::size_t pos = 0;
  while ((pos = text.find("```lean", pos)) != std::string::npos) {
    std::size_t body = text.find('\n', pos);
    if (body == std::string::npos) break;
    ++body;
    const std::size_t close = text.find("```", body);
    const std::size_t end = close == std::string::npos ? text.size() : close;
    found = text.substr(body, end - body);
    pos = end + 3 < text.size() ? end + 3 : text.size();
    if (close == std::string::npos) break;
  }
  return found;
}

}  // namespace

std::string extract_proof_candidate(const std::string& completion) {
  // Completions that restate the declaration inside a fenced code block.
  if (const auto block = last_lean_fence(completion)) {
    const auto decls = scan_lean_declarations(*block);
    for (auto it = decls.rbegin(); it != decls.rend(); ++it) {
      if (it->parse_ok && !trim(it->proof).empty()) {
        return it->proof;
      }
    }
    const std::string body(trim(*block));
    if (body.rfind(":=", 0) == 0) return body;
    if (body.rfind("by", 0) == 0) return ":= " + body;
    return std::string();
  }

  // Bare continuation of a pre-filled prompt; the model may close the
  // pre-opened fence at the end.
  std::string head = completion;
  if (const std::size_t fence = head.find("```"); fence != std::string::npos) {
    head = head.substr(0, fence);
  }
  const std::string body(trim(head));
  if (body.empty()) return std::string();
  if (body.rfind(":=", 0) == 0) return body;
  return ":= " + body;
}

// ---------------------------------------------------------------------------
// Config and serialization.

std::vector<ProverEndpoint> endpoints_from_json(const Json& j) {
  std::vector<ProverEndpoint> endpoints;
  std::vector<std::string> seen;
  const Json& list = j.is_array() ? j : j.at("endpoints");
  for (const Json& e : list) {
    ProverEndpoint ep;
    ep.name = e.at("name").get<std::string>();
    ep.base_url = e.at("base_url").get<std::string>();
    ep.model_id = e.value("model_id", std::string());
    ep.api_key_env = e.value("api_key_env", std::string());
    ep.style = prompt_style_from_string(e.value("style", std::string("deepseek")));
    ep.max_new_tokens = e.value("max_new_tokens", 4096);
    ep.temperature = e.value("temperature", 1.0);
    ep.request_timeout = e.value("request_timeout", 120.0);
    ep.supports_logprobs = e.value("supports_logprobs", false);
    if (ep.temperature < 0) {
      throw ConfigError("endpoint '" + ep.name + "': temperature must be >= 0");
    }
    for (const auto& name : seen) {
      if (name == ep.name) {
        throw ConfigError("duplicate endpoint name: " + ep.name);
      }
    }
    seen.push_back(ep.name);
    endpoints.push_back(std::move(ep));
  }
  return endpoints;
}

std::vector<ProverEndpoint> load_endpoints(const std::string& path) {
  return endpoints_from_json(Json::parse(read_file(path)));
}

Json attempt_to_json(const ProofAttempt& a) {
  Json j;
  j["theorem_id"] = a.theorem_id;
  j["attempt_index"] = a.attempt_index;
  j["prover_name"] = a.prover_name;
  j["completion"] = a.completion;
  j["finish_reason"] = a.finish_reason;
  if (a.token_logprobs) {
    Json lps = Json::array();
    for (const TokenLogprob& t : *a.token_logprobs) {
      lps.push_back(Json::array({t.token, t.logprob}));
    }
    j["logprobs"] = std::move(lps);
  }
  return j;
}

ProofAttempt attempt_from_json(const Json& j) {
  ProofAttempt a;
  a.theorem_id = j.at("theorem_id").get<std::string>();
  a.attempt_index = j.at("attempt_index").get<int>();
  a.prover_name = j.value("prover_name", std::string());
  a.completion = j.value("completion", std::string());
  a.finish_reason = j.value("finish_reason", std::string());
  if (j.contains("logprobs") && !j.at("logprobs").is_null()) {
    std::vector<TokenLogprob> lps;
    for (const Json& pair : j.at("logprobs")) {
      lps.push_back({pair.at(0).get<std::string>(), pair.at(1).get<double>()});
    }
    a.token_logprobs = std::move(lps);
  }
  return a;
}

void save_attempts(const std::string& path,
                   const std::vector<ProofAttempt>& attempts) {
  std::vector<Json> rows;
  rows.reserve(attempts.size());
  for (const auto& a : attempts) rows.push_back(attempt_to_json(a));
  write_jsonl(path, rows);
}

std::vector<ProofAttempt> load_attempts(const std::string& path) {
  std::vector<ProofAttempt> attempts;
  for (const Json& j : read_jsonl(path)) {
    attempts.push_back(attempt_from_json(j));
  }
  return attempts;
}

}  // namespace physforge
