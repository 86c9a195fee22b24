#include "physforge/verifier.hpp"

#include <cctype>
#include <chrono>
#include <filesystem>
#include <mutex>
#include <unordered_map>

#include "physforge/errors.hpp"
#include "physforge/util/hash.hpp"
#include "physforge/util/strings.hpp"
#include "physforge/util/subprocess.hpp"
#include "physforge/util/worker_pool.hpp"

namespace physforge {

std::string to_string(VerdictStatus s) {
  switch (s) {
    case VerdictStatus::Pass: return "Pass";
    case VerdictStatus::Fail: return "Fail";
    case VerdictStatus::Timeout: return "Timeout";
    case VerdictStatus::ForbiddenKeyword: return "ForbiddenKeyword";
    case VerdictStatus::ToolchainError: return "ToolchainError";
  }
  return "Fail";
}

VerdictStatus verdict_status_from_string(std::string_view s) {
  if (s == "Pass") return VerdictStatus::Pass;
  if (s == "Fail") return VerdictStatus::Fail;
  if (s == "Timeout") return VerdictStatus::Timeout;
  if (s == "ForbiddenKeyword") return VerdictStatus::ForbiddenKeyword;
  if (s == "ToolchainError") return VerdictStatus::ToolchainError;
  throw ConfigError("unknown verdict status: " + std::string(s));
}

// ---------------------------------------------------------------------------
// Forbidden-keyword scanning.

std::string strip_comments_and_strings(std::string_view lean_code) {
  std::string out(lean_code);
  std::size_t i = 0;
  while (i < out.size()) {
    const char c = out[i];
    if (c == '-' && i + 1 < out.size() && out[i + 1] == '-') {
      while (i < out.size() && out[i] != '\n') out[i++] = ' ';
      continue;
    }
    if (c == '/' && i + 1 < out.size() && out[i + 1] == '-') {
      int depth = 0;
      while (i < out.size()) {
        if (out[i] == '/' && i + 1 < out.size() && out[i + 1] == '-') {
          out[i] = out[i + 1] = ' ';
          i += 2;
          ++depth;
          continue;
        }
        if (out[i] == '-' && i + 1 < out.size() && out[i + 1] == '/') {
          out[i] = out[i + 1] = ' ';
          i += 2;
          if (--depth == 0) break;
          continue;
        }
        if (out[i] != '\n') out[i] = ' ';
        ++i;
      }
      continue;
    }
    if (c == '"') {
      out[i++] = ' ';
      while (i < out.size()) {
        if (out[i] == '\\' && i + 1 < out.size()) {
          out[i] = out[i + 1] = ' ';
          i += 2;
          continue;
        }
        const bool closing = out[i] == '"';
        out[i++] = ' ';
        if (closing) break;
      }
      continue;
    }
    ++i;
  }
  return out;
}

namespace {

// Identifier-continuation characters for boundary checks. `?` and `!` are
// excluded so `sorry?` still counts as a hit on `sorry`.
inline bool ident_cont(unsigned char c) {
  return std::isalnum(c) || c == '_' || c == '\'' || c >= 0x80;
}

bool keyword_at(const std::string& text, std::size_t p, std::string_view kw) {
  if (p + kw.size() > text.size()) return false;
  if (std::string_view(text).substr(p, kw.size()) != kw) return false;
  if (p > 0 && ident_cont(static_cast<unsigned char>(text[p - 1]))) return false;
  const std::size_t after = p + kw.size();
  if (after < text.size() && ident_cont(static_cast<unsigned char>(text[after]))) {
    return false;
  }
  return true;
}

}  // namespace

std::optional<std::string> scan_forbidden(std::string_view proof_candidate) {
  static const std::string_view kKeywords[] = {"sorry", "admit", "apply?"};
  const std::string code = strip_comments_and_strings(proof_candidate);
  for (std::size_t i = 0; i < code.size(); ++i) {
    for (std::string_view kw : kKeywords) {
      if (code[i] == kw[0] && keyword_at(code, i, kw)) {
        return std::string(kw);
      }
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Composition and placeholders.

std::string compose_lean_snippet(const std::string& header,
                                 const std::string& statement,
                                 const std::string& proof_candidate) {
  std::string out;
  if (!trim(header).empty()) {
    out += std::string(rtrim(header));
    out += "\n\n";
  }
  out += std::string(rtrim(statement));
  if (!trim(proof_candidate).empty()) {
    out += " ";
    out += std::string(trim(proof_candidate));
  }
  out += "\n";
  return out;
}

std::string strip_sorry_suffix(std::string_view statement) {
  std::string_view s = rtrim(statement);
  if (s.size() >= 5 && s.substr(s.size() - 5) == "sorry") {
    const std::string_view before = s.substr(0, s.size() - 5);
    if (before.empty() ||
        !ident_cont(static_cast<unsigned char>(before.back()))) {
      s = rtrim(before);
    }
  }
  if (s.size() >= 2 && s.substr(s.size() - 2) == ":=") {
    s = rtrim(s.substr(0, s.size() - 2));
  }
  return std::string(s);
}

std::string append_sorry_placeholder(std::string_view statement) {
  return strip_sorry_suffix(statement) + " := sorry";
}

// ---------------------------------------------------------------------------
// Stub backend.

VerdictStatus StubTable::lookup(const std::string& header,
                                const std::string& statement,
                                const std::string& proof) const {
  const std::string composed = compose_lean_snippet(header, statement, proof);
  for (const StubRule& rule : rules) {
    const std::string* hay = nullptr;
    if (rule.field == "header") hay = &header;
    else if (rule.field == "statement") hay = &statement;
    else if (rule.field == "proof") hay = &proof;
    else if (rule.field == "composed") hay = &composed;
    else throw ConfigError("stub rule: unknown field: " + rule.field);
    if (hay->find(rule.contains) != std::string::npos) return rule.status;
  }
  return default_status;
}

StubTable StubTable::from_json(const Json& j) {
  StubTable table;
  if (j.contains("default")) {
    table.default_status =
        verdict_status_from_string(j.at("default").get<std::string>());
  }
  if (j.contains("rules")) {
    for (const Json& r : j.at("rules")) {
      StubRule rule;
      rule.field = r.at("field").get<std::string>();
      if (rule.field != "header" && rule.field != "statement" &&
          rule.field != "proof" && rule.field != "composed") {
        throw ConfigError("stub rule: unknown field: " + rule.field);
      }
      rule.contains = r.at("contains").get<std::string>();
      rule.status = verdict_status_from_string(r.at("status").get<std::string>());
      table.rules.push_back(std::move(rule));
    }
  }
  return table;
}

StubTable StubTable::load(const std::string& path) {
  return from_json(Json::parse(read_file(path)));
}

Json StubTable::to_json() const {
  Json j;
  j["default"] = to_string(default_status);
  j["rules"] = Json::array();
  for (const StubRule& rule : rules) {
    Json r;
    r["field"] = rule.field;
    r["contains"] = rule.contains;
    r["status"] = to_string(rule.status);
    j["rules"].push_back(std::move(r));
  }
  return j;
}

// ---------------------------------------------------------------------------
// Verdict cache. Keys are content hashes; inserts of identical keys are
// idempotent, so concurrent writers are safe.

namespace {

class VerdictCache {
 public:
  std::optional<VerificationVerdict> get(const std::string& key,
                                         const std::optional<std::string>& dir) {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      auto it = mem_.find(key);
      if (it != mem_.end()) return it->second;
    }
    if (dir) {
      const std::string path = *dir + "/" + key + ".json";
      if (std::filesystem::exists(path)) {
        try {
          const Json j = Json::parse(read_file(path));
          VerificationVerdict v = verdict_from_json(j);
          std::lock_guard<std::mutex> lock(mutex_);
          mem_.emplace(key, v);
          return v;
        } catch (const std::exception&) {
          return std::nullopt;  // unreadable cache entry: recompute
        }
      }
    }
    return std::nullopt;
  }

  void put(const std::string& key, const VerificationVerdict& v,
           const std::optional<std::string>& dir) {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      mem_.emplace(key, v);
    }
    if (dir) {
      std::filesystem::create_directories(*dir);
      atomic_write_file(*dir + "/" + key + ".json",
                        verdict_to_json(v).dump(2) + "\n");
    }
  }

 private:
  std::mutex mutex_;
  std::unordered_map<std::string, VerificationVerdict> mem_;
};

VerdictCache& global_cache() {
  static VerdictCache cache;
  return cache;
}

std::string cache_key(const VerifierConfig& cfg, const std::string& composed) {
  std::string material = "physforge-verdict-v1|";
  material += cfg.backend == VerifierBackend::Stub ? "stub" : "lean";
  material += "|";
  material += cfg.toolchain_version;
  material += "|";
  material += composed;
  return sha256_hex(material);
}

// Runs the pinned toolchain on a scratch file composed from the job.
VerificationVerdict run_lean_backend(const VerificationJob& job,
                                     const VerifierConfig& cfg,
                                     const std::string& composed,
                                     bool whitelist_sorry) {
  namespace fs = std::filesystem;
  VerificationVerdict verdict;
  verdict.job_id = job.job_id;

  if (cfg.project_dir.empty() || !fs::is_directory(cfg.project_dir)) {
    verdict.status = VerdictStatus::ToolchainError;
    verdict.diagnostics = "project_dir is not a directory: " + cfg.project_dir;
    return verdict;
  }

  const fs::path scratch_dir = fs::path(cfg.project_dir) / ".physforge_scratch";
  fs::create_directories(scratch_dir);
  const std::string file_tag =
      sha256_hex(job.job_id + "|" + composed).substr(0, 24);
  const fs::path scratch = scratch_dir / ("job_" + file_tag + ".lean");
  write_file(scratch.string(), composed);

  std::vector<std::string> argv = cfg.compile_command;
  argv.push_back(scratch.string());

  const double timeout =
      job.timeout_seconds > 0 ? job.timeout_seconds : cfg.default_timeout;
  const ProcessResult proc = run_process(argv, cfg.project_dir, timeout);
  verdict.wall_time = proc.wall_seconds;
  verdict.diagnostics = proc.output;

  if (proc.spawn_failed) {
    verdict.status = VerdictStatus::ToolchainError;
    fs::remove(scratch);
    return verdict;
  }
  if (proc.timed_out) {
    verdict.status = VerdictStatus::Timeout;
    if (!cfg.keep_failed_scratch) fs::remove(scratch);
    return verdict;
  }

  const bool has_error = proc.output.find(" error: ") != std::string::npos ||
                         proc.output.rfind("error: ", 0) == 0;
  const bool uses_sorry =
      proc.output.find("declaration uses 'sorry'") != std::string::npos;

  const bool pass = proc.exit_code == 0 && !has_error &&
                    (whitelist_sorry || !uses_sorry);
  verdict.status = pass ? VerdictStatus::Pass : VerdictStatus::Fail;
  if (pass) {
    fs::remove(scratch);
  } else if (!cfg.keep_failed_scratch) {
    fs::remove(scratch);
  }
  return verdict;
}

VerificationVerdict run_backend(const VerificationJob& job,
                                const VerifierConfig& cfg,
                                bool whitelist_sorry) {
  const std::string composed =
      compose_lean_snippet(job.header, job.statement, job.proof_candidate);

  const std::string key = cache_key(cfg, composed);
  if (cfg.cache_dir) {
    if (auto hit = global_cache().get(key, cfg.cache_dir)) {
      hit->job_id = job.job_id;
      return *hit;
    }
  }

  VerificationVerdict verdict;
  if (cfg.backend == VerifierBackend::Stub) {
    if (!cfg.stub) {
      verdict.job_id = job.job_id;
      verdict.status = VerdictStatus::ToolchainError;
      verdict.diagnostics = "stub backend selected but no stub table loaded";
      return verdict;
    }
    const auto start = std::chrono::steady_clock::now();
    verdict.job_id = job.job_id;
    verdict.status =
        cfg.stub->lookup(job.header, job.statement, job.proof_candidate);
    if (verdict.status != VerdictStatus::Pass) {
      verdict.diagnostics = "stub: " + to_string(verdict.status);
    }
    verdict.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
  } else {
    verdict = run_lean_backend(job, cfg, composed, whitelist_sorry);
  }

  // Transient outcomes are not cached; a re-run with a fixed toolchain or a
  // longer timeout should get a fresh verdict.
  const bool cacheable = verdict.status == VerdictStatus::Pass ||
                         verdict.status == VerdictStatus::Fail;
  if (cfg.cache_dir && cacheable) {
    global_cache().put(key, verdict, cfg.cache_dir);
  }
  return verdict;
}

}  // namespace

// ---------------------------------------------------------------------------
// Public operations.

VerificationVerdict verify(const VerificationJob& job, const VerifierConfig& cfg) {
  if (trim(job.statement).empty()) {
    throw std::invalid_argument("verify: statement must be nonempty");
  }
  if (job.timeout_seconds <= 0) {
    throw std::invalid_argument("verify: timeout must be positive");
  }

  if (auto kw = scan_forbidden(job.proof_candidate)) {
    VerificationVerdict verdict;
    verdict.job_id = job.job_id;
    verdict.status = VerdictStatus::ForbiddenKeyword;
    verdict.diagnostics = "forbidden keyword: " + *kw;
    return verdict;
  }
  if (trim(job.proof_candidate).empty()) {
    VerificationVerdict verdict;
    verdict.job_id = job.job_id;
    verdict.status = VerdictStatus::Fail;
    verdict.diagnostics = "empty proof candidate";
    return verdict;
  }
  return run_backend(job, cfg, /*whitelist_sorry=*/false);
}

VerificationVerdict check_statement_syntax(const std::string& header,
                                           const std::string& statement,
                                           const VerifierConfig& cfg) {
  if (trim(statement).empty()) {
    throw std::invalid_argument("check_statement_syntax: statement must be nonempty");
  }
  VerificationJob job;
  job.job_id = "syntax:" + sha256_hex(header + "\x1f" + statement).substr(0, 16);
  job.header = header;
  job.statement = strip_sorry_suffix(statement);
  job.proof_candidate = ":= sorry";
  job.timeout_seconds = cfg.default_timeout;
  return run_backend(job, cfg, /*whitelist_sorry=*/true);
}

std::vector<VerificationVerdict> verify_batch(
    const std::vector<VerificationJob>& jobs, const VerifierConfig& cfg) {
  if (cfg.max_parallel < 1) {
    throw ConfigError("verify_batch: max_parallel must be >= 1");
  }
  return parallel_map(jobs, cfg.max_parallel, [&](const VerificationJob& job) {
    try {
      return verify(job, cfg);
    } catch (const std::exception& e) {
      VerificationVerdict verdict;
      verdict.job_id = job.job_id;
      verdict.status = VerdictStatus::ToolchainError;
      verdict.diagnostics = e.what();
      return verdict;
    }
  });
}

std::string make_job_id(const std::string& theorem_id, int attempt_index) {
  return theorem_id + "#" + std::to_string(attempt_index);
}

std::pair<std::string, int> parse_job_id(const std::string& job_id) {
  const std::size_t hash = job_id.rfind('#');
  if (hash == std::string::npos) return {job_id, 0};
  try {
    return {job_id.substr(0, hash), std::stoi(job_id.substr(hash + 1))};
  } catch (const std::exception&) {
    return {job_id, 0};
  }
}

Json verdict_to_json(const VerificationVerdict& v) {
  Json j;
  j["job_id"] = v.job_id;
  j["status"] = to_string(v.status);
  j["wall_time"] = v.wall_time;
  j["diagnostics"] = v.diagnostics;
  return j;
}

VerificationVerdict verdict_from_json(const Json& j) {
  VerificationVerdict v;
  v.job_id = j.at("job_id").get<std::string>();
  v.status = verdict_status_from_string(j.at("status").get<std::string>());
  v.wall_time = j.value("wall_time", 0.0);
  v.diagnostics = j.value("diagnostics", std::string());
  return v;
}

}  // namespace physforge
