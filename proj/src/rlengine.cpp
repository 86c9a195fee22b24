#include "physforge/rlengine.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "physforge/errors.hpp"
#include "physforge/log.hpp"
#include "physforge/util/strings.hpp"

namespace physforge {

void GrpoConfig::validate() const {
  if (group_size < 2) {
    throw ConfigError("grpo: group_size must be >= 2");
  }
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) {
    throw ConfigError("grpo: clip_eps must lie in (0,1)");
  }
  if (!(std_floor > 0.0)) {
    throw ConfigError("grpo: std_floor must be positive");
  }
  if (kl_beta < 0.0) {
    throw ConfigError("grpo: kl_beta must be >= 0");
  }
}

Json GrpoConfig::to_json() const {
  Json j;
  j["group_size"] = group_size;
  j["clip_eps"] = clip_eps;
  j["kl_beta"] = kl_beta;
  j["std_floor"] = std_floor;
  return j;
}

double reward(const VerificationVerdict& verdict) {
  return verdict.status == VerdictStatus::Pass ? 1.0 : 0.0;
}

std::vector<double> advantages(const std::vector<double>& rewards,
                               const GrpoConfig& cfg) {
  cfg.validate();
  if (rewards.size() != cfg.group_size) {
    throw std::invalid_argument("advantages: reward count " +
                                std::to_string(rewards.size()) +
                                " does not match group size " +
                                std::to_string(cfg.group_size));
  }
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;

  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double std_dev = std::sqrt(var / n);  // population std

  if (std_dev < cfg.std_floor) {
    return std::vector<double>(rewards.size(), 0.0);  // degenerate group
  }
  std::vector<double> out;
  out.reserve(rewards.size());
  for (double r : rewards) out.push_back((r - mean) / std_dev);
  return out;
}

namespace {

void check_group_arrays(const GrpoGroup& group,
                        const std::vector<std::vector<double>>& a,
                        const std::vector<std::vector<double>>& b,
                        const char* what) {
  if (a.size() != group.advantages.size() || b.size() != a.size()) {
    throw std::invalid_argument(std::string(what) +
                                ": logprob arrays must cover every completion");
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size()) {
      throw std::invalid_argument(std::string(what) +
                                  ": per-token array length mismatch in "
                                  "completion " +
                                  std::to_string(i));
    }
    if (a[i].empty()) {
      throw std::invalid_argument(std::string(what) +
                                  ": empty token array in completion " +
                                  std::to_string(i));
    }
  }
}

}  // namespace

SurrogateResult surrogate_terms(const GrpoGroup& group, const GrpoConfig& cfg) {
  cfg.validate();
  if (!group.logp_current || !group.logp_old) {
    throw std::invalid_argument(
        "surrogate_terms: current and old logprob arrays required");
  }
  const auto& cur = *group.logp_current;
  const auto& old = *group.logp_old;
  check_group_arrays(group, cur, old, "surrogate_terms");

  const double lo = 1.0 - cfg.clip_eps;
  const double hi = 1.0 + cfg.clip_eps;

  SurrogateResult result;
  result.per_token.resize(cur.size());
  double group_sum = 0.0;
  for (std::size_t i = 0; i < cur.size(); ++i) {
    const double adv = group.advantages[i];
    double completion_sum = 0.0;
    result.per_token[i].reserve(cur[i].size());
    for (std::size_t t = 0; t < cur[i].size(); ++t) {
      const double w = std::exp(cur[i][t] - old[i][t]);
      const double clipped = std::clamp(w, lo, hi);
      const double term = std::min(w * adv, clipped * adv);
      result.per_token[i].push_back(term);
      completion_sum += term;
    }
    group_sum += completion_sum / static_cast<double>(cur[i].size());
  }
  result.group_value = group_sum / static_cast<double>(cur.size());
  return result;
}

double kl_penalty(const GrpoGroup& group, const GrpoConfig& cfg) {
  cfg.validate();
  if (cfg.kl_beta == 0.0) return 0.0;
  if (!group.logp_current || !group.logp_ref) {
    throw std::invalid_argument(
        "kl_penalty: current and reference logprob arrays required");
  }
  const auto& cur = *group.logp_current;
  const auto& ref = *group.logp_ref;
  check_group_arrays(group, cur, ref, "kl_penalty");

  double group_sum = 0.0;
  for (std::size_t i = 0; i < cur.size(); ++i) {
    double completion_sum = 0.0;
    for (std::size_t t = 0; t < cur[i].size(); ++t) {
      const double delta = ref[i][t] - cur[i][t];
      // expm1 keeps the estimate accurate near zero.
      completion_sum += std::expm1(delta) - delta;
    }
    group_sum += completion_sum / static_cast<double>(cur[i].size());
  }
  return cfg.kl_beta * group_sum / static_cast<double>(cur.size());
}

std::vector<TheoremRecord> curriculum_order(std::vector<TheoremRecord> records) {
  for (const TheoremRecord& r : records) {
    if (r.proof.empty()) {
      throw std::invalid_argument(
          "curriculum_order: record without a ground-truth proof: " + r.id);
    }
  }
  std::stable_sort(records.begin(), records.end(),
                   [](const TheoremRecord& a, const TheoremRecord& b) {
                     if (a.proof.size() != b.proof.size()) {
                       return a.proof.size() < b.proof.size();
                     }
                     return a.id < b.id;
                   });
  return records;
}

AttemptsByTheorem join_attempts_verdicts(const std::vector<ProofAttempt>& attempts,
                                         const std::vector<VerificationVerdict>& verdicts) {
  std::unordered_map<std::string, const VerificationVerdict*> by_job;
  for (const VerificationVerdict& v : verdicts) by_job[v.job_id] = &v;

  AttemptsByTheorem out;
  for (const ProofAttempt& a : attempts) {
    const auto it = by_job.find(make_job_id(a.theorem_id, a.attempt_index));
    if (it == by_job.end()) {
      log_warn("no verdict for attempt " +
               make_job_id(a.theorem_id, a.attempt_index) + "; dropped");
      continue;
    }
    out[a.theorem_id].push_back(AttemptVerdict{a, *it->second});
  }
  for (auto& [id, list] : out) {
    std::sort(list.begin(), list.end(),
              [](const AttemptVerdict& x, const AttemptVerdict& y) {
                return x.attempt.attempt_index < y.attempt.attempt_index;
              });
  }
  return out;
}

std::vector<TrainingBatch> build_batches(const std::vector<TheoremRecord>& ordered,
                                         const AttemptsByTheorem& attempts,
                                         const GrpoConfig& cfg,
                                         std::size_t batch_size,
                                         const std::string& corpus_hash) {
  cfg.validate();
  if (batch_size == 0) {
    throw ConfigError("build_batches: batch_size must be >= 1");
  }

  std::vector<GrpoGroup> groups;
  for (const TheoremRecord& rec : ordered) {
    const auto it = attempts.find(rec.id);
    const std::size_t have = it == attempts.end() ? 0 : it->second.size();
    if (have != cfg.group_size) {
      log_warn("build_batches: record " + rec.id + " has " +
               std::to_string(have) + " attempts, expected " +
               std::to_string(cfg.group_size) + "; skipped");
      continue;
    }
    GrpoGroup group;
    group.prompt_id = rec.id;
    bool all_have_logprobs = true;
    std::vector<std::vector<double>> sampled_logprobs;
    for (const AttemptVerdict& av : it->second) {
      group.completions.push_back(av.attempt.completion);
      group.rewards.push_back(reward(av.verdict));
      if (av.attempt.token_logprobs && !av.attempt.token_logprobs->empty()) {
        std::vector<double> values;
        values.reserve(av.attempt.token_logprobs->size());
        for (const TokenLogprob& t : *av.attempt.token_logprobs) {
          values.push_back(t.logprob);
        }
        sampled_logprobs.push_back(std::move(values));
      } else {
        all_have_logprobs = false;
      }
    }
    group.advantages = advantages(group.rewards, cfg);
    // Rollout logprobs are the old-policy arrays; the trainer fills in the
    // current and reference policies.
    if (all_have_logprobs) group.logp_old = std::move(sampled_logprobs);
    groups.push_back(std::move(group));
  }

  std::vector<TrainingBatch> batches;
  for (std::size_t start = 0; start < groups.size(); start += batch_size) {
    const std::size_t end = std::min(start + batch_size, groups.size());
    TrainingBatch batch;
    batch.groups.assign(groups.begin() + static_cast<std::ptrdiff_t>(start),
                        groups.begin() + static_cast<std::ptrdiff_t>(end));
    batch.metadata["config"] = cfg.to_json();
    batch.metadata["curriculum_position"] = start;
    batch.metadata["corpus_hash"] = corpus_hash;
    batches.push_back(std::move(batch));
  }
  return batches;
}

std::vector<TheoremRecord> raft_select(const std::vector<TheoremRecord>& records,
                                       const AttemptsByTheorem& attempts) {
  std::vector<TheoremRecord> out;
  for (const TheoremRecord& rec : records) {
    const auto it = attempts.find(rec.id);
    if (it == attempts.end()) continue;
    std::set<std::string> seen_completions;
    for (const AttemptVerdict& av : it->second) {
      if (av.verdict.status != VerdictStatus::Pass) continue;
      if (!seen_completions.insert(av.attempt.completion).second) continue;
      TheoremRecord kept = rec;
      kept.proof = extract_proof_candidate(av.attempt.completion);
      if (kept.proof.empty()) kept.proof = av.attempt.completion;
      kept.id = record_content_id(kept.header, kept.statement, kept.proof);
      kept.token_len = whitespace_token_count(kept.header + "\n" +
                                              kept.statement + "\n" + kept.proof);
      out.push_back(std::move(kept));
    }
  }
  return out;
}

namespace {

Json group_to_json(const GrpoGroup& group, const std::string& prompt_text) {
  Json j;
  j["prompt_id"] = group.prompt_id;
  j["prompt_text"] = prompt_text;
  j["completions"] = group.completions;
  j["rewards"] = group.rewards;
  j["advantages"] = group.advantages;
  if (group.logp_current || group.logp_old || group.logp_ref) {
    Json lp;
    if (group.logp_current) lp["current"] = *group.logp_current;
    if (group.logp_old) lp["old"] = *group.logp_old;
    if (group.logp_ref) lp["ref"] = *group.logp_ref;
    j["logprobs"] = std::move(lp);
  }
  return j;
}

}  // namespace

void export_batches_jsonl(const std::string& path,
                          const std::vector<TrainingBatch>& batches,
                          const std::function<std::string(const std::string&)>&
                              prompt_text_for_id) {
  std::vector<Json> rows;
  Json manifest;
  manifest["batches"] = Json::array();
  for (const TrainingBatch& batch : batches) {
    Json entry;
    entry["metadata"] = batch.metadata;
    entry["size"] = batch.groups.size();
    manifest["batches"].push_back(std::move(entry));
    for (const GrpoGroup& group : batch.groups) {
      rows.push_back(group_to_json(
          group, prompt_text_for_id ? prompt_text_for_id(group.prompt_id)
                                    : std::string()));
    }
  }
  write_jsonl(path, rows);
  if (!batches.empty()) {
    manifest["config"] = batches.front().metadata.value("config", Json::object());
  }
  atomic_write_file(path + ".manifest.json", manifest.dump(2) + "\n");
}

void export_raft_jsonl(const std::string& path,
                       const std::vector<TheoremRecord>& records,
                       const std::function<std::string(const TheoremRecord&)>&
                           prompt_text_for_record) {
  std::vector<Json> rows;
  rows.reserve(records.size());
  for (const TheoremRecord& rec : records) {
    Json j;
    j["prompt_text"] = prompt_text_for_record ? prompt_text_for_record(rec)
                                              : std::string();
    j["completion"] = rec.proof;
    rows.push_back(std::move(j));
  }
  write_jsonl(path, rows);
}

}  // namespace physforge
