#pragma once

#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "physforge/corpus.hpp"
#include "physforge/provers.hpp"
#include "physforge/verifier.hpp"

namespace physforge {

struct GrpoConfig {
  std::size_t group_size = 16;  // samples per prompt
  double clip_eps = 0.2;        // importance-ratio clip half-width
  double kl_beta = 0.0;         // reference-policy penalty weight
  double std_floor = 1e-8;      // below this, a group is degenerate

  void validate() const;
  Json to_json() const;
};

/// One prompt with its sampled completions, rewards and advantages, plus
/// optional per-token logprob arrays for the current, old and reference
/// policies. When present, the three arrays of a completion have equal
/// length.
struct GrpoGroup {
  std::string prompt_id;
  std::vector<std::string> completions;
  std::vector<double> rewards;
  std::vector<double> advantages;
  std::optional<std::vector<std::vector<double>>> logp_current;
  std::optional<std::vector<std::vector<double>>> logp_old;
  std::optional<std::vector<std::vector<double>>> logp_ref;
};

struct TrainingBatch {
  std::vector<GrpoGroup> groups;  // curriculum order preserved
  Json metadata;                  // config snapshot, curriculum position, corpus hash
};

/// Verifiable binary reward: 1 only for Pass. Forbidden-keyword verdicts are
/// explicitly 0 so placeholder tactics cannot hack the reward.
double reward(const VerificationVerdict& verdict);

/// Group-relative advantages (r - mean) / popstd, identical for every token
/// of a completion. Groups whose population std falls below std_floor are
/// degenerate and get an all-zeros vector.
std::vector<double> advantages(const std::vector<double>& rewards,
                               const GrpoConfig& cfg);

struct SurrogateResult {
  std::vector<std::vector<double>> per_token;
  double group_value = 0.0;  // (1/G) sum_i (1/|y_i|) sum_t term_{i,t}
};

/// Clipped-surrogate terms: w = exp(logp_current - logp_old) per token,
/// term = min(w * A, clip(w, 1-eps, 1+eps) * A).
SurrogateResult surrogate_terms(const GrpoGroup& group, const GrpoConfig& cfg);

/// Per-token estimate exp(d) - d - 1 with d = logp_ref - logp_current,
/// averaged with the same double normalization as the surrogate and scaled
/// by kl_beta. Zero when kl_beta is zero.
double kl_penalty(const GrpoGroup& group, const GrpoConfig& cfg);

/// Ascending stable sort by ground-truth proof length in characters; ties
/// break by record id. Throws std::invalid_argument when a record has an
/// empty proof.
std::vector<TheoremRecord> curriculum_order(std::vector<TheoremRecord> records);

struct AttemptVerdict {
  ProofAttempt attempt;
  VerificationVerdict verdict;
};

using AttemptsByTheorem = std::unordered_map<std::string, std::vector<AttemptVerdict>>;

/// Joins attempts to verdicts by job id "<theorem_id>#<attempt_index>";
/// attempts without a verdict are dropped with a log line. Each theorem's
/// list comes back sorted by attempt index.
AttemptsByTheorem join_attempts_verdicts(const std::vector<ProofAttempt>& attempts,
                                         const std::vector<VerificationVerdict>& verdicts);

/// One GrpoGroup per record (rewards and advantages filled in), chunked into
/// batches of batch_size in curriculum order. Records whose attempt count
/// differs from group_size are skipped with a log line.
std::vector<TrainingBatch> build_batches(const std::vector<TheoremRecord>& ordered,
                                         const AttemptsByTheorem& attempts,
                                         const GrpoConfig& cfg,
                                         std::size_t batch_size,
                                         const std::string& corpus_hash);

/// Rejection-sampling selection: one training record per verified attempt
/// (proof = that completion), deduplicated by identical completion text;
/// records with no verified attempt are omitted.
std::vector<TheoremRecord> raft_select(const std::vector<TheoremRecord>& records,
                                       const AttemptsByTheorem& attempts);

/// One JSONL line per group: {prompt_id, prompt_text, completions, rewards,
/// advantages, logprobs?}. A sidecar manifest `<path>.manifest.json` records
/// the config snapshot and batch boundaries.
void export_batches_jsonl(const std::string& path,
                          const std::vector<TrainingBatch>& batches,
                          const std::function<std::string(const std::string&)>&
                              prompt_text_for_id);

/// Supervised pairs {prompt_text, completion}.
void export_raft_jsonl(const std::string& path,
                       const std::vector<TheoremRecord>& records,
                       const std::function<std::string(const TheoremRecord&)>&
                           prompt_text_for_record);

}  // namespace physforge
