#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "physforge/util/jsonl.hpp"

namespace physforge {

enum class VerdictStatus { Pass, Fail, Timeout, ForbiddenKeyword, ToolchainError };

std::string to_string(VerdictStatus s);
VerdictStatus verdict_status_from_string(std::string_view s);

struct VerificationJob {
  std::string job_id;
  std::string header;
  std::string statement;
  std::string proof_candidate;
  double timeout_seconds = 300.0;
};

struct VerificationVerdict {
  std::string job_id;
  VerdictStatus status = VerdictStatus::Fail;
  std::string diagnostics;
  double wall_time = 0.0;
};

enum class VerifierBackend { LeanToolchain, Stub };

/// Rule table for the hermetic stub backend. Rules are evaluated in order
/// against the fields of a composed job; the first match decides the status.
struct StubRule {
  std::string field;  // "header" | "statement" | "proof" | "composed"
  std::string contains;
  VerdictStatus status = VerdictStatus::Pass;
};

struct StubTable {
  std::vector<StubRule> rules;
  VerdictStatus default_status = VerdictStatus::Fail;

  VerdictStatus lookup(const std::string& header, const std::string& statement,
                       const std::string& proof) const;

  static StubTable from_json(const Json& j);
  static StubTable load(const std::string& path);
  Json to_json() const;
};

struct VerifierConfig {
  VerifierBackend backend = VerifierBackend::LeanToolchain;
  std::string project_dir;  // Lean project with dependencies prebuilt
  std::string toolchain_version = "4.20.0";
  std::size_t max_parallel = 1;
  double default_timeout = 300.0;
  std::optional<std::string> cache_dir;
  std::vector<std::string> compile_command = {"lake", "env", "lean"};
  bool keep_failed_scratch = true;
  std::shared_ptr<StubTable> stub;  // required for the stub backend
};

/// Returns the first of `sorry`, `admit`, `apply?` occurring as a standalone
/// token in code; comments and string literals are stripped first, and
/// identifier boundaries are respected (`sorry_free_lemma` does not match).
std::optional<std::string> scan_forbidden(std::string_view proof_candidate);

/// Comment/string stripping used by the scanner, exposed for tests. Stripped
/// bytes become spaces so token boundaries survive.
std::string strip_comments_and_strings(std::string_view lean_code);

/// header + blank line + statement + " " + proof, newline-terminated.
std::string compose_lean_snippet(const std::string& header,
                                 const std::string& statement,
                                 const std::string& proof_candidate);

/// Removes a trailing proof placeholder (`:= sorry`, `sorry`, or a dangling
/// `:=`) from a statement.
std::string strip_sorry_suffix(std::string_view statement);

/// Appends ` := sorry` unless the statement already ends in a placeholder.
std::string append_sorry_placeholder(std::string_view statement);

/// Checks a single proof candidate. The forbidden-keyword scan runs first and
/// short-circuits to ForbiddenKeyword without touching the backend.
VerificationVerdict verify(const VerificationJob& job, const VerifierConfig& cfg);

/// Statement well-formedness: verifies with a `:= sorry` placeholder, with
/// the sorry-axiom warning whitelisted. Pass means the statement elaborates.
VerificationVerdict check_statement_syntax(const std::string& header,
                                           const std::string& statement,
                                           const VerifierConfig& cfg);

/// Order-aligned verdicts, at most max_parallel concurrent backend calls.
/// Per-job failures surface in that job's verdict; the batch never aborts.
std::vector<VerificationVerdict> verify_batch(
    const std::vector<VerificationJob>& jobs, const VerifierConfig& cfg);

std::string make_job_id(const std::string& theorem_id, int attempt_index);
std::pair<std::string, int> parse_job_id(const std::string& job_id);

Json verdict_to_json(const VerificationVerdict& v);
VerificationVerdict verdict_from_json(const Json& j);

}  // namespace physforge
