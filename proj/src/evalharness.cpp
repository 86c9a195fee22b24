#include "physforge/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "physforge/errors.hpp"
#include "physforge/log.hpp"
#include "physforge/util/hash.hpp"
#include "physforge/util/rng.hpp"

namespace physforge {

void EvalConfig::validate() const {
  if (k < 1) throw ConfigError("eval: k must be >= 1");
  if (n_ppl_samples < 1) throw ConfigError("eval: n_ppl_samples must be >= 1");
  if (ppl_sample_count_per_split < 1) {
    throw ConfigError("eval: ppl_sample_count_per_split must be >= 1");
  }
}

double round_percent(double fraction) {
  return std::floor(fraction * 1000.0 + 0.5) / 10.0;
}

namespace {

std::string one_decimal(double value) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(1);
  ss << value;
  return ss.str();
}

std::string signed_one_decimal(double value) {
  return (value >= 0 ? "+" : "") + one_decimal(value);
}

}  // namespace

std::string format_count_rate(std::size_t solved, std::size_t total) {
  if (total == 0) return std::to_string(solved) + "/0 = —";
  return std::to_string(solved) + "/" + std::to_string(total) + " = " +
         one_decimal(round_percent(static_cast<double>(solved) /
                                   static_cast<double>(total))) +
         "%";
}

// ---------------------------------------------------------------------------
// pass@k

EvalReport pass_at_k(
    const std::map<std::string, std::vector<VerificationVerdict>>& verdicts_by_theorem,
    const std::unordered_map<std::string, std::string>& category_by_theorem,
    const EvalConfig& cfg) {
  cfg.validate();

  // Category rows in config order first, then first-appearance order.
  std::vector<std::string> labels = cfg.categories;
  auto label_index = [&labels](const std::string& label) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == label) return i;
    }
    labels.push_back(label);
    return labels.size() - 1;
  };

  std::map<std::string, CategoryCount> rows;
  CategoryCount overall;
  overall.label = "Overall";
  std::size_t underfilled = 0;

  for (const auto& [theorem_id, verdicts] : verdicts_by_theorem) {
    if (verdicts.size() < static_cast<std::size_t>(cfg.k)) ++underfilled;
    const std::size_t budget =
        std::min<std::size_t>(verdicts.size(), static_cast<std::size_t>(cfg.k));
    bool solved = false;
    for (std::size_t i = 0; i < budget; ++i) {
      if (verdicts[i].status == VerdictStatus::Pass) {
        solved = true;
        break;
      }
    }

    std::string label = "Uncategorized";
    if (const auto it = category_by_theorem.find(theorem_id);
        it != category_by_theorem.end()) {
      label = it->second;
    }
    label_index(label);
    CategoryCount& row = rows[label];
    row.label = label;
    ++row.total;
    ++overall.total;
    if (solved) {
      ++row.solved;
      ++overall.solved;
    }
  }

  EvalReport report;
  for (const std::string& label : labels) {
    const auto it = rows.find(label);
    if (it != rows.end()) {
      report.categories.push_back(it->second);
    } else if (!label.empty()) {
      report.categories.push_back(CategoryCount{label, 0, 0});
    }
  }
  report.overall = overall;
  report.metadata["k"] = cfg.k;
  report.metadata["theorems"] = verdicts_by_theorem.size();
  report.metadata["underfilled"] = underfilled;
  std::string config_material = "k=" + std::to_string(cfg.k);
  for (const std::string& label : cfg.categories) {
    config_material += "|" + label;
  }
  report.metadata["config_hash"] = sha256_hex(config_material).substr(0, 16);
  return report;
}

// ---------------------------------------------------------------------------
// Perplexity.

double perplexity(const ProofAttempt& attempt) {
  if (!attempt.token_logprobs || attempt.token_logprobs->empty()) {
    throw std::invalid_argument("perplexity: attempt has no token logprobs");
  }
  double sum = 0.0;
  for (const TokenLogprob& t : *attempt.token_logprobs) sum += t.logprob;
  return std::exp(-sum / static_cast<double>(attempt.token_logprobs->size()));
}

double mean_perplexity(const std::string& prompt_id,
                       const std::vector<ProofAttempt>& attempts) {
  if (attempts.empty()) {
    throw std::invalid_argument("mean_perplexity: no attempts");
  }
  for (const ProofAttempt& a : attempts) {
    if (a.theorem_id != prompt_id) {
      throw std::invalid_argument("mean_perplexity: mixed prompt ids: " +
                                  prompt_id + " vs " + a.theorem_id);
    }
  }
  // Mean centered on the first value: exact for identical samples and
  // better conditioned when the perplexities are close.
  const double first = perplexity(attempts.front());
  double diff_sum = 0.0;
  for (const ProofAttempt& a : attempts) {
    diff_sum += perplexity(a) - first;
  }
  return first + diff_sum / static_cast<double>(attempts.size());
}

namespace {

std::vector<const TheoremRecord*> sample_records(
    const std::vector<TheoremRecord>& records, std::size_t count,
    std::uint64_t seed) {
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  seeded_shuffle(order, seed);
  std::vector<const TheoremRecord*> out;
  for (std::size_t i = 0; i < order.size() && out.size() < count; ++i) {
    out.push_back(&records[order[i]]);
  }
  return out;
}

}  // namespace

PerplexityReport ppl_probe(const std::vector<TheoremRecord>& train,
                           const std::vector<TheoremRecord>& test,
                           ChatBackend& backend, const ProverEndpoint& ep,
                           const EvalConfig& cfg, const SamplerOptions& opts) {
  cfg.validate();
  if (!ep.supports_logprobs) {
    throw ConfigError("ppl_probe: endpoint '" + ep.name +
                      "' does not support logprobs");
  }
  if (train.empty() && test.empty()) {
    throw ConfigError("ppl_probe: no records to sample");
  }

  PerplexityReport report;
  const std::size_t per_split =
      static_cast<std::size_t>(cfg.ppl_sample_count_per_split);

  struct SplitInput {
    const char* name;
    const std::vector<TheoremRecord>* records;
    std::uint64_t seed;
  };
  const SplitInput splits[] = {
      {"train", &train, cfg.sample_seed},
      {"test", &test, cfg.sample_seed + 1},
  };

  for (const SplitInput& split : splits) {
    if (split.records->empty()) continue;
    double sum = 0.0;
    std::size_t count = 0;
    for (const TheoremRecord* rec :
         sample_records(*split.records, per_split, split.seed)) {
      const std::string prompt = render_prompt(*rec, ep.style);
      const std::vector<ProofAttempt> attempts = complete_with_logprobs(
          backend, ep, rec->id, prompt, cfg.n_ppl_samples, opts);
      std::vector<ProofAttempt> usable;
      for (const ProofAttempt& a : attempts) {
        if (a.token_logprobs && !a.token_logprobs->empty()) usable.push_back(a);
      }
      if (usable.empty()) {
        log_warn("ppl_probe: no usable samples for " + rec->id + "; skipped");
        continue;
      }
      PerplexityReport::PromptProbe probe;
      probe.prompt_id = rec->id;
      probe.split = split.name;
      probe.mean_ppl = mean_perplexity(rec->id, usable);
      probe.samples = static_cast<int>(usable.size());
      sum += probe.mean_ppl;
      ++count;
      report.prompts.push_back(std::move(probe));
    }
    if (count > 0) {
      report.split_average[split.name] = sum / static_cast<double>(count);
      report.split_counts[split.name] = count;
    }
  }

  report.metadata["endpoint"] = ep.name;
  report.metadata["n_ppl_samples"] = cfg.n_ppl_samples;
  report.metadata["ppl_sample_count_per_split"] = cfg.ppl_sample_count_per_split;
  report.metadata["sample_seed"] = cfg.sample_seed;
  // Sampling settings the source text never pins down; recorded as
  // assumptions so reports are self-documenting.
  report.metadata["assumptions"] =
      Json{{"temperature", ep.temperature}, {"max_new_tokens", ep.max_new_tokens}};
  return report;
}

// ---------------------------------------------------------------------------
// Rendering.

Json report_to_json(const EvalReport& report) {
  Json j;
  j["categories"] = Json::array();
  for (const CategoryCount& row : report.categories) {
    j["categories"].push_back(Json{{"label", row.label},
                                   {"solved", row.solved},
                                   {"total", row.total},
                                   {"rate", row.rate()}});
  }
  j["overall"] = Json{{"label", report.overall.label},
                      {"solved", report.overall.solved},
                      {"total", report.overall.total},
                      {"rate", report.overall.rate()}};
  j["metadata"] = report.metadata;
  return j;
}

EvalReport report_from_json(const Json& j) {
  EvalReport report;
  for (const Json& row : j.at("categories")) {
    CategoryCount c;
    c.label = row.at("label").get<std::string>();
    c.solved = row.at("solved").get<std::size_t>();
    c.total = row.at("total").get<std::size_t>();
    report.categories.push_back(std::move(c));
  }
  report.overall.label = j.at("overall").value("label", std::string("Overall"));
  report.overall.solved = j.at("overall").at("solved").get<std::size_t>();
  report.overall.total = j.at("overall").at("total").get<std::size_t>();
  if (j.contains("metadata")) report.metadata = j.at("metadata");
  return report;
}

namespace {

const CategoryCount* find_row(const EvalReport& report, const std::string& label) {
  for (const CategoryCount& row : report.categories) {
    if (row.label == label) return &row;
  }
  return nullptr;
}

std::string render_row(const CategoryCount& row, const CategoryCount* base_row) {
  std::ostringstream ss;
  ss << std::left << std::setw(28) << row.label << " "
     << format_count_rate(row.solved, row.total);
  if (base_row != nullptr && base_row->total > 0 && row.total > 0) {
    const double delta =
        round_percent(row.rate()) - round_percent(base_row->rate());
    ss << " (" << signed_one_decimal(delta) << "%)";
  }
  return ss.str();
}

}  // namespace

std::string render_report(const EvalReport& report, ReportFormat format,
                          const EvalReport* baseline) {
  if (format == ReportFormat::Json) {
    Json j = report_to_json(report);
    if (baseline != nullptr) {
      j["baseline"] = report_to_json(*baseline);
      if (baseline->overall.total > 0 && report.overall.total > 0) {
        j["overall_delta_pct"] = round_percent(report.overall.rate()) -
                                 round_percent(baseline->overall.rate());
      }
    }
    return j.dump(2) + "\n";
  }

  std::ostringstream ss;
  for (const CategoryCount& row : report.categories) {
    ss << render_row(row, baseline ? find_row(*baseline, row.label) : nullptr)
       << "\n";
  }
  ss << render_row(report.overall, baseline ? &baseline->overall : nullptr)
     << "\n";
  return ss.str();
}

std::string render_ppl_report(const PerplexityReport& report, ReportFormat format) {
  if (format == ReportFormat::Json) {
    Json j;
    j["split_average"] = report.split_average;
    j["split_counts"] = report.split_counts;
    j["prompts"] = Json::array();
    for (const auto& probe : report.prompts) {
      j["prompts"].push_back(Json{{"prompt_id", probe.prompt_id},
                                  {"split", probe.split},
                                  {"mean_ppl", probe.mean_ppl},
                                  {"samples", probe.samples}});
    }
    j["metadata"] = report.metadata;
    return j.dump(2) + "\n";
  }

  std::ostringstream ss;
  ss << std::left << std::setw(16) << "" << std::setw(14) << "Training Set"
     << "Test Set\n";
  ss << std::left << std::setw(16) << "mean PPL";
  for (const char* split : {"train", "test"}) {
    std::ostringstream cell;
    if (const auto it = report.split_average.find(split);
        it != report.split_average.end()) {
      cell.setf(std::ios::fixed);
      cell.precision(3);
      cell << it->second;
    } else {
      cell << "—";
    }
    ss << std::setw(14) << cell.str();
  }
  ss << "\n";
  return ss.str();
}

}  // namespace physforge
