#include "physforge/conjectures.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>
#include <thread>

#include "physforge/errors.hpp"
#include "physforge/log.hpp"
#include "physforge/util/hash.hpp"
#include "physforge/util/strings.hpp"

namespace physforge {

std::string to_string(ConjectureStage s) {
  switch (s) {
    case ConjectureStage::Generated: return "generated";
    case ConjectureStage::SyntaxOk: return "syntax_ok";
    case ConjectureStage::Provable: return "provable";
    case ConjectureStage::Rejected: return "rejected";
  }
  return "generated";
}

ConjectureStage conjecture_stage_from_string(std::string_view s) {
  if (s == "generated") return ConjectureStage::Generated;
  if (s == "syntax_ok") return ConjectureStage::SyntaxOk;
  if (s == "provable") return ConjectureStage::Provable;
  if (s == "rejected") return ConjectureStage::Rejected;
  throw ConfigError("unknown conjecture stage: " + std::string(s));
}

PipelineLedger& PipelineLedger::operator+=(const PipelineLedger& other) {
  n_seeds += other.n_seeds;
  n_generated += other.n_generated;
  n_syntax_ok += other.n_syntax_ok;
  n_provable += other.n_provable;
  return *this;
}

namespace {

std::string one_decimal_percent(double fraction) {
  const double pct = std::floor(fraction * 1000.0 + 0.5) / 10.0;
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(1);
  ss << pct << "%";
  return ss.str();
}

}  // namespace

Json PipelineLedger::to_json() const {
  Json j;
  j["n_seeds"] = n_seeds;
  j["n_generated"] = n_generated;
  j["n_syntax_ok"] = n_syntax_ok;
  j["n_provable"] = n_provable;
  j["retention_syntax"] = retention_syntax();
  j["yield_overall"] = yield_overall();
  j["retention_syntax_pct"] = one_decimal_percent(retention_syntax());
  j["yield_overall_pct"] = one_decimal_percent(yield_overall());
  return j;
}

std::string PipelineLedger::render_text() const {
  std::ostringstream ss;
  ss << "seeds:          " << n_seeds << "\n";
  ss << "generated:      " << n_generated << "\n";
  ss << "syntax ok:      " << n_syntax_ok << " (retention "
     << one_decimal_percent(retention_syntax()) << ")\n";
  ss << "provable:       " << n_provable << " (yield "
     << one_decimal_percent(yield_overall()) << ")\n";
  return ss.str();
}

// ---------------------------------------------------------------------------
// Reply parsing.

namespace {

std::optional<std::vector<std::string>> statements_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("conjectures")) return std::nullopt;
  const Json& list = j.at("conjectures");
  if (!list.is_array()) return std::nullopt;
  std::vector<std::string> out;
  for (const Json& item : list) {
    if (item.is_object() && item.contains("statement") &&
        item.at("statement").is_string()) {
      out.push_back(item.at("statement").get<std::string>());
    } else if (item.is_string()) {
      out.push_back(item.get<std::string>());
    }
  }
  return out;
}

std::optional<Json> try_parse(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error&) {
    return std::nullopt;
  }
}

}  // namespace

std::optional<std::vector<std::string>> parse_conjecture_reply(const std::string& reply) {
  // Whole reply as JSON.
  if (auto j = try_parse(std::string(trim(reply)))) {
    if (auto s = statements_from_json(*j)) return s;
  }
  // Fenced ```json / ``` blocks.
  std::size_t pos = 0;
  while ((pos = reply.find("```", pos)) != std::string::npos) {
    std::size_t body = reply.find('\n', pos);
    if (body == std::string::npos) break;
    ++body;
    const std::size_t close = reply.find("```", body);
    if (close == std::string::npos) break;
    if (auto j = try_parse(std::string(trim(reply.substr(body, close - body))))) {
      if (auto s = statements_from_json(*j)) return s;
    }
    pos = close + 3;
  }
  // Outermost braces.
  const std::size_t open = reply.find('{');
  const std::size_t shut = reply.rfind('}');
  if (open != std::string::npos && shut != std::string::npos && shut > open) {
    if (auto j = try_parse(reply.substr(open, shut - open + 1))) {
      if (auto s = statements_from_json(*j)) return s;
    }
  }
  return std::nullopt;
}

std::vector<Conjecture> generate_conjectures(ChatBackend& backend,
                                             const ProverEndpoint& ep,
                                             const TheoremRecord& seed, int k,
                                             const SamplerOptions& opts) {
  if (k < 1) {
    throw std::invalid_argument("generate_conjectures: k must be >= 1");
  }
  const std::string prompt = render_conjecture_prompt(seed, k);

  // A malformed structured reply is re-requested once before giving up.
  std::optional<std::vector<std::string>> statements;
  for (int round = 0; round < 2 && !statements; ++round) {
    try {
      std::vector<ChatChoice> choices;
      double backoff = opts.backoff_seconds;
      for (int attempt = 0;; ++attempt) {
        try {
          choices = backend.complete(ep, prompt, 1, false);
          break;
        } catch (const TransportError& e) {
          if (attempt >= opts.max_retries) throw;
          log_warn(std::string(e.what()) + " (retrying)");
          if (backoff > 0) {
            std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
            backoff *= 2;
          }
        }
      }
      if (!choices.empty()) {
        statements = parse_conjecture_reply(choices.front().text);
      }
    } catch (const TransportError& e) {
      log_warn("conjecture generation failed for seed " + seed.id + ": " +
               e.what());
      return {};
    }
  }
  if (!statements) {
    log_warn("unparseable conjecture reply for seed " + seed.id +
             "; seed skipped");
    return {};
  }

  std::vector<Conjecture> out;
  int index = 0;
  for (const std::string& raw : *statements) {
    if (static_cast<int>(out.size()) >= k) break;
    const std::string stmt = std::string(trim(raw));
    if (stmt.empty()) continue;
    Conjecture c;
    c.parent_id = seed.id;
    c.statement = append_sorry_placeholder(stmt);
    c.conjecture_id = sha256_hex(seed.id + "#" + std::to_string(index) + "#" +
                                 c.statement);
    c.stage = ConjectureStage::Generated;
    out.push_back(std::move(c));
    ++index;
  }
  return out;
}

ParentIndex build_parent_index(const std::vector<TheoremRecord>& seeds) {
  ParentIndex index;
  for (const TheoremRecord& r : seeds) index.emplace(r.id, r);
  return index;
}

// ---------------------------------------------------------------------------
// Filtering.

SyntaxFilterResult filter_syntax(std::vector<Conjecture> conjectures,
                                 const ParentIndex& parents,
                                 const VerifierConfig& vcfg) {
  SyntaxFilterResult result;
  for (Conjecture& c : conjectures) {
    if (c.stage != ConjectureStage::Generated) continue;
    const auto parent = parents.find(c.parent_id);
    if (parent == parents.end()) {
      c.stage = ConjectureStage::Rejected;
      c.rejection_reason = "parent record not found: " + c.parent_id;
      ++result.rejected;
      continue;
    }
    const VerificationVerdict verdict =
        check_statement_syntax(parent->second.header, c.statement, vcfg);
    if (verdict.status == VerdictStatus::Pass) {
      c.stage = ConjectureStage::SyntaxOk;
      ++result.delta.n_syntax_ok;
    } else if (verdict.status == VerdictStatus::ToolchainError) {
      // Left at generated, flagged for a re-run rather than rejected.
      ++result.pending_rerun;
    } else {
      c.stage = ConjectureStage::Rejected;
      c.rejection_reason = "syntax: " + to_string(verdict.status) +
                           (verdict.diagnostics.empty() ? "" : ": ") +
                           verdict.diagnostics;
      ++result.rejected;
    }
  }
  result.conjectures = std::move(conjectures);
  return result;
}

ProvabilityFilterResult filter_provable(std::vector<Conjecture> conjectures,
                                        const std::vector<ProverEndpoint>& endpoints,
                                        ChatBackend& backend, int n_proofs,
                                        const ParentIndex& parents,
                                        const VerifierConfig& vcfg,
                                        const SamplerOptions& opts) {
  if (n_proofs < 1) {
    throw std::invalid_argument("filter_provable: n_proofs must be >= 1");
  }
  if (endpoints.empty()) {
    throw ConfigError("filter_provable: need at least one endpoint");
  }
  const std::vector<int> budgets = split_budget(n_proofs, endpoints.size());

  ProvabilityFilterResult result;
  for (std::size_t e = 0; e < endpoints.size(); ++e) {
    result.budget_allocation.emplace_back(endpoints[e].name, budgets[e]);
  }
  for (Conjecture& c : conjectures) {
    if (c.stage != ConjectureStage::SyntaxOk) continue;
    const auto parent = parents.find(c.parent_id);
    if (parent == parents.end()) {
      c.stage = ConjectureStage::Rejected;
      c.rejection_reason = "parent record not found: " + c.parent_id;
      ++result.rejected;
      continue;
    }

    // Prompt the provers with the bare statement; the placeholder is
    // re-appended by the prompt template itself.
    TheoremRecord target = parent->second;
    target.id = c.conjecture_id;
    target.statement = strip_sorry_suffix(c.statement);
    target.proof.clear();
    target.doc_comment.reset();

    bool proved = false;
    bool any_reachable = false;
    for (std::size_t e = 0; e < endpoints.size() && !proved; ++e) {
      if (budgets[e] == 0) continue;
      const std::vector<ProofAttempt> attempts =
          sample_proofs(backend, endpoints[e], target, budgets[e], opts);
      for (const ProofAttempt& attempt : attempts) {
        if (attempt.finish_reason == "transport_failure") continue;
        any_reachable = true;
        VerificationJob job;
        job.job_id = make_job_id(c.conjecture_id, attempt.attempt_index);
        job.header = parent->second.header;
        job.statement = target.statement;
        job.proof_candidate = extract_proof_candidate(attempt.completion);
        job.timeout_seconds = vcfg.default_timeout;
        if (trim(job.proof_candidate).empty()) continue;
        const VerificationVerdict verdict = verify(job, vcfg);
        if (verdict.status == VerdictStatus::Pass) {
          c.stage = ConjectureStage::Provable;
          c.witness_proof = job.proof_candidate;
          ++result.delta.n_provable;
          proved = true;
          break;  // early stop: the existential predicate is satisfied
        }
      }
    }
    if (!proved) {
      if (!any_reachable) {
        ++result.pending_rerun;  // stays syntax_ok, flagged for re-run
      } else {
        c.stage = ConjectureStage::Rejected;
        c.rejection_reason = "no sampled proof verified";
        ++result.rejected;
      }
    }
  }
  result.conjectures = std::move(conjectures);
  return result;
}

// ---------------------------------------------------------------------------
// Assembly.

std::string normalize_statement(std::string_view statement) {
  return collapse_whitespace(strip_sorry_suffix(statement));
}

AssembleResult assemble_training_set(const std::vector<TheoremRecord>& seed_train,
                                     const std::vector<Conjecture>& provable,
                                     const ParentIndex& parents) {
  AssembleResult result;
  std::set<std::string> seen;
  for (const TheoremRecord& r : seed_train) {
    seen.insert(normalize_statement(r.statement));
    result.records.push_back(r);
  }

  for (const Conjecture& c : provable) {
    if (c.stage != ConjectureStage::Provable) continue;
    ++result.conjectures_pre_dedup;
    if (!c.witness_proof) {
      throw ConfigError("provable conjecture without witness proof: " +
                        c.conjecture_id);
    }
    const std::string key = normalize_statement(c.statement);
    if (!seen.insert(key).second) {
      ++result.duplicates_removed;
      continue;
    }
    const auto parent = parents.find(c.parent_id);
    if (parent == parents.end()) {
      throw ConfigError("assemble: parent record not found: " + c.parent_id);
    }

    TheoremRecord rec;
    rec.source_path = parent->second.source_path;
    rec.header = parent->second.header;
    rec.statement = strip_sorry_suffix(c.statement);
    rec.proof = *c.witness_proof;
    rec.category = parent->second.category;
    rec.split = Split::Train;
    rec.token_len =
        whitespace_token_count(rec.header + "\n" + rec.statement + "\n" + rec.proof);
    rec.id = record_content_id(rec.header, rec.statement, rec.proof);
    result.records.push_back(std::move(rec));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Serialization.

Json conjecture_to_json(const Conjecture& c) {
  Json j;
  j["conjecture_id"] = c.conjecture_id;
  j["parent_id"] = c.parent_id;
  j["statement"] = c.statement;
  j["stage"] = to_string(c.stage);
  if (c.rejection_reason) j["rejection_reason"] = *c.rejection_reason;
  if (c.witness_proof) j["witness_proof"] = *c.witness_proof;
  return j;
}

Conjecture conjecture_from_json(const Json& j) {
  Conjecture c;
  c.conjecture_id = j.at("conjecture_id").get<std::string>();
  c.parent_id = j.at("parent_id").get<std::string>();
  c.statement = j.at("statement").get<std::string>();
  c.stage = conjecture_stage_from_string(j.at("stage").get<std::string>());
  if (j.contains("rejection_reason") && !j.at("rejection_reason").is_null()) {
    c.rejection_reason = j.at("rejection_reason").get<std::string>();
  }
  if (j.contains("witness_proof") && !j.at("witness_proof").is_null()) {
    c.witness_proof = j.at("witness_proof").get<std::string>();
  }
  return c;
}

void save_conjectures(const std::string& path, const std::vector<Conjecture>& cs) {
  std::vector<Json> rows;
  rows.reserve(cs.size());
  for (const auto& c : cs) rows.push_back(conjecture_to_json(c));
  write_jsonl(path, rows);
}

std::vector<Conjecture> load_conjectures(const std::string& path) {
  std::vector<Conjecture> cs;
  for (const Json& j : read_jsonl(path)) {
    cs.push_back(conjecture_from_json(j));
  }
  return cs;
}

}  // namespace physforge
