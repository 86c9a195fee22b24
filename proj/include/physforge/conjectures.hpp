#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "physforge/corpus.hpp"
#include "physforge/provers.hpp"
#include "physforge/verifier.hpp"

namespace physforge {

enum class ConjectureStage { Generated, SyntaxOk, Provable, Rejected };

std::string to_string(ConjectureStage s);
ConjectureStage conjecture_stage_from_string(std::string_view s);

/// An LLM-generated candidate statement derived from a seed record. Stage
/// transitions are monotone: generated -> syntax_ok -> provable, with
/// rejected as the terminal failure state.
struct Conjecture {
  std::string conjecture_id;
  std::string parent_id;
  std::string statement;  // normalized to end in `:= sorry`
  ConjectureStage stage = ConjectureStage::Generated;
  std::optional<std::string> rejection_reason;
  std::optional<std::string> witness_proof;  // first verified proof
};

/// Stage counters for the synthesis pipeline. Retention and yield are
/// fractions of n_generated.
struct PipelineLedger {
  std::size_t n_seeds = 0;
  std::size_t n_generated = 0;
  std::size_t n_syntax_ok = 0;
  std::size_t n_provable = 0;

  double retention_syntax() const {
    return n_generated == 0 ? 0.0
                            : static_cast<double>(n_syntax_ok) /
                                  static_cast<double>(n_generated);
  }
  double yield_overall() const {
    return n_generated == 0 ? 0.0
                            : static_cast<double>(n_provable) /
                                  static_cast<double>(n_generated);
  }

  PipelineLedger& operator+=(const PipelineLedger& other);

  Json to_json() const;
  std::string render_text() const;  // percentages to one decimal place
};

/// Parses the structured conjecture reply: a JSON dictionary keyed
/// "conjectures" holding a list of {"statement": ...} entries. Tolerates
/// surrounding prose and code fences. nullopt when no such dictionary is
/// found.
std::optional<std::vector<std::string>> parse_conjecture_reply(const std::string& reply);

/// Asks the endpoint for k conjectures seeded on one record. A malformed
/// reply is re-requested once; a still-unparseable reply yields an empty
/// list and the seed is skipped with a log line.
std::vector<Conjecture> generate_conjectures(ChatBackend& backend,
                                             const ProverEndpoint& ep,
                                             const TheoremRecord& seed, int k,
                                             const SamplerOptions& opts = {});

using ParentIndex = std::unordered_map<std::string, TheoremRecord>;

ParentIndex build_parent_index(const std::vector<TheoremRecord>& seeds);

struct SyntaxFilterResult {
  std::vector<Conjecture> conjectures;  // order preserved
  PipelineLedger delta;                 // n_syntax_ok only
  std::size_t rejected = 0;
  std::size_t pending_rerun = 0;  // toolchain errors, left at generated
};

/// Stage 1: statement well-formedness against the parent header.
SyntaxFilterResult filter_syntax(std::vector<Conjecture> conjectures,
                                 const ParentIndex& parents,
                                 const VerifierConfig& vcfg);

struct ProvabilityFilterResult {
  std::vector<Conjecture> conjectures;
  PipelineLedger delta;  // n_provable only
  std::size_t rejected = 0;
  std::size_t pending_rerun = 0;  // every attempt transport-failed
  // Effective per-endpoint sample allocation, for the ledger.
  std::vector<std::pair<std::string, int>> budget_allocation;
};

/// Stage 2: a conjecture survives iff at least one of n_proofs sampled
/// proofs verifies. Verification stops early at the first Pass; the witness
/// is the first passing attempt in (endpoint order, attempt index) order.
ProvabilityFilterResult filter_provable(std::vector<Conjecture> conjectures,
                                        const std::vector<ProverEndpoint>& endpoints,
                                        ChatBackend& backend, int n_proofs,
                                        const ParentIndex& parents,
                                        const VerifierConfig& vcfg,
                                        const SamplerOptions& opts = {});

/// Whitespace-collapsed statement with the proof placeholder stripped; the
/// key used for deduplication.
std::string normalize_statement(std::string_view statement);

struct AssembleResult {
  std::vector<TheoremRecord> records;
  std::size_t conjectures_pre_dedup = 0;
  std::size_t duplicates_removed = 0;
};

/// Converts provable conjectures into train records (header and category
/// inherited from the parent, proof = witness) and appends them to the seed
/// records, dropping exact duplicates by normalized statement text.
AssembleResult assemble_training_set(const std::vector<TheoremRecord>& seed_train,
                                     const std::vector<Conjecture>& provable,
                                     const ParentIndex& parents);

Json conjecture_to_json(const Conjecture& c);
Conjecture conjecture_from_json(const Json& j);

void save_conjectures(const std::string& path, const std::vector<Conjecture>& cs);
std::vector<Conjecture> load_conjectures(const std::string& path);

}  // namespace physforge
