#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "physforge/corpus.hpp"
#include "physforge/provers.hpp"
#include "physforge/verifier.hpp"

namespace physforge {

struct EvalConfig {
  int k = 16;                           // pass@k budget
  std::vector<std::string> categories;  // display order; extras appended
  int n_ppl_samples = 16;               // completions per probed prompt
  int ppl_sample_count_per_split = 50;
  std::uint64_t sample_seed = 0;

  void validate() const;
};

struct CategoryCount {
  std::string label;
  std::size_t solved = 0;
  std::size_t total = 0;

  double rate() const {
    return total == 0 ? 0.0
                      : static_cast<double>(solved) / static_cast<double>(total);
  }
};

struct EvalReport {
  std::vector<CategoryCount> categories;
  CategoryCount overall;  // label "Overall"
  Json metadata;
};

/// A theorem is solved iff any of its first k verdicts (attempt order) is
/// Pass. Theorems with fewer than k verdicts are counted with what they have
/// and flagged in metadata. Uncategorized theorems land in "Uncategorized".
EvalReport pass_at_k(
    const std::map<std::string, std::vector<VerificationVerdict>>& verdicts_by_theorem,
    const std::unordered_map<std::string, std::string>& category_by_theorem,
    const EvalConfig& cfg);

/// exp(-mean token logprob); rejects attempts without logprobs.
double perplexity(const ProofAttempt& attempt);

/// Arithmetic mean of per-attempt perplexities; all attempts must share
/// prompt_id.
double mean_perplexity(const std::string& prompt_id,
                       const std::vector<ProofAttempt>& attempts);

struct PerplexityReport {
  struct PromptProbe {
    std::string prompt_id;
    std::string split;  // "train" or "test"
    double mean_ppl = 0.0;
    int samples = 0;
  };
  std::vector<PromptProbe> prompts;
  std::map<std::string, double> split_average;
  std::map<std::string, std::size_t> split_counts;
  Json metadata;
};

/// Draws a seeded sample of records per split, samples n_ppl_samples
/// completions with logprobs for each, and averages mean perplexity per
/// split.
PerplexityReport ppl_probe(const std::vector<TheoremRecord>& train,
                           const std::vector<TheoremRecord>& test,
                           ChatBackend& backend, const ProverEndpoint& ep,
                           const EvalConfig& cfg,
                           const SamplerOptions& opts = {});

enum class ReportFormat { TextTable, Json };

/// Deterministic rendering; percentages half-up to one decimal. With a
/// baseline, rows gain signed deltas computed on the rounded percentages.
std::string render_report(const EvalReport& report, ReportFormat format,
                          const EvalReport* baseline = nullptr);

std::string render_ppl_report(const PerplexityReport& report, ReportFormat format);

Json report_to_json(const EvalReport& report);
EvalReport report_from_json(const Json& j);

/// Percent value rounded half-up to one decimal (68.442 % -> 68.4).
double round_percent(double fraction);

/// "167/244 = 68.4%", or "0/0 = —" for an empty bucket.
std::string format_count_rate(std::size_t solved, std::size_t total);

}  // namespace physforge
