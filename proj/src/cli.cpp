#include "physforge/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "physforge/config.hpp"
#include "physforge/conjectures.hpp"
#include "physforge/corpus.hpp"
#include "physforge/errors.hpp"
#include "physforge/evalharness.hpp"
#include "physforge/log.hpp"
#include "physforge/manifest.hpp"
#include "physforge/provers.hpp"
#include "physforge/rlengine.hpp"
#include "physforge/util/hash.hpp"
#include "physforge/util/strings.hpp"
#include "physforge/verifier.hpp"

namespace physforge {

namespace {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Shared option bundles.

struct VerifierFlags {
  std::string backend = "lean_toolchain";
  std::string project_dir;
  std::string stub_table;
  std::string cache_dir;
  std::string toolchain_version = "4.20.0";
  std::size_t jobs = 1;
  double timeout = 300.0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--backend", backend, "Verifier backend: lean_toolchain or stub");
    cmd->add_option("--project", project_dir, "Lean project with prebuilt dependencies");
    cmd->add_option("--stub-table", stub_table, "Stub verdict table (JSON) for hermetic runs");
    cmd->add_option("--cache-dir", cache_dir, "Verdict cache directory");
    cmd->add_option("--toolchain-version", toolchain_version, "Pinned Lean toolchain version");
    cmd->add_option("--jobs", jobs, "Max concurrent verifier invocations");
    cmd->add_option("--timeout", timeout, "Per-job timeout in seconds");
  }

  VerifierConfig to_config() const {
    VerifierConfig cfg;
    if (backend == "stub") {
      cfg.backend = VerifierBackend::Stub;
      if (stub_table.empty()) {
        throw ConfigError("--stub-table is required with --backend stub");
      }
      cfg.stub = std::make_shared<StubTable>(StubTable::load(stub_table));
    } else if (backend == "lean_toolchain") {
      cfg.backend = VerifierBackend::LeanToolchain;
    } else {
      throw ConfigError("--backend must be lean_toolchain or stub");
    }
    cfg.project_dir = project_dir;
    cfg.toolchain_version = toolchain_version;
    cfg.max_parallel = std::max<std::size_t>(jobs, 1);
    cfg.default_timeout = timeout;
    if (!cache_dir.empty()) cfg.cache_dir = cache_dir;
    return cfg;
  }
};

std::string counts_to_string(const std::optional<std::pair<std::size_t, std::size_t>>& c) {
  if (!c) return "";
  return std::to_string(c->first) + "," + std::to_string(c->second);
}

std::optional<std::pair<std::size_t, std::size_t>> parse_counts(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const std::size_t comma = s.find(',');
  if (comma == std::string::npos) {
    throw ConfigError("--counts expects \"<train>,<test>\"");
  }
  try {
    return std::make_pair(std::stoull(s.substr(0, comma)),
                          std::stoull(s.substr(comma + 1)));
  } catch (const std::exception&) {
    throw ConfigError("--counts expects \"<train>,<test>\"");
  }
}

ProverEndpoint find_endpoint(const std::vector<ProverEndpoint>& endpoints,
                             const std::string& name) {
  for (const ProverEndpoint& ep : endpoints) {
    if (ep.name == name) return ep;
  }
  throw ConfigError("unknown endpoint: " + name);
}

std::map<std::string, std::vector<VerificationVerdict>> group_verdicts(
    const std::vector<VerificationVerdict>& verdicts) {
  std::map<std::string, std::vector<std::pair<int, VerificationVerdict>>> tmp;
  for (const VerificationVerdict& v : verdicts) {
    const auto [theorem_id, index] = parse_job_id(v.job_id);
    tmp[theorem_id].emplace_back(index, v);
  }
  std::map<std::string, std::vector<VerificationVerdict>> out;
  for (auto& [id, list] : tmp) {
    std::sort(list.begin(), list.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [index, v] : list) out[id].push_back(std::move(v));
  }
  return out;
}

std::vector<VerificationVerdict> load_verdicts(const std::string& path) {
  std::vector<VerificationVerdict> out;
  for (const Json& j : read_jsonl(path)) out.push_back(verdict_from_json(j));
  return out;
}

void save_verdicts(const std::string& path,
                   const std::vector<VerificationVerdict>& verdicts) {
  std::vector<Json> rows;
  rows.reserve(verdicts.size());
  for (const auto& v : verdicts) rows.push_back(verdict_to_json(v));
  write_jsonl(path, rows);
}

// ---------------------------------------------------------------------------
// Subcommand implementations.

struct ExtractArgs {
  std::string root;
  std::string out;
  std::size_t max_tokens = 4096;
  std::size_t jobs = 1;
  std::string token_mode = "whitespace";
  std::string category_rules;
  bool force = false;
};

int cmd_extract(const ExtractArgs& args) {
  const Manifest manifest = make_manifest(
      "extract",
      {args.root, std::to_string(args.max_tokens), args.token_mode,
       args.category_rules},
      {});
  if (can_skip_stage(args.out, manifest, args.force)) {
    log_info("extract: output up to date, skipping (use --force to re-run)");
    return 0;
  }

  ExtractOptions opts;
  opts.max_tokens = args.max_tokens;
  opts.estimator = token_estimator_by_name(args.token_mode);
  opts.workers = args.jobs;

  ExtractStats stats;
  std::vector<TheoremRecord> records = extract_corpus(args.root, opts, &stats);

  std::vector<CategoryRule> rules = default_category_rules();
  if (!args.category_rules.empty()) {
    rules.clear();
    for (const Json& r : Json::parse(read_file(args.category_rules))) {
      rules.push_back({r.at("path_component").get<std::string>(),
                       category_from_string(r.at("category").get<std::string>())});
    }
  }
  CategoryStats cat_stats;
  assign_categories(records, rules, &cat_stats);

  save_corpus(args.out, records);
  write_manifest(args.out, manifest);
  log_info("extract: " + std::to_string(records.size()) + " records from " +
           std::to_string(stats.files_seen) + " files (skipped: " +
           std::to_string(stats.skipped_forbidden) + " forbidden, " +
           std::to_string(stats.skipped_too_long) + " too long, " +
           std::to_string(stats.skipped_no_proof) + " no proof, " +
           std::to_string(stats.skipped_unparseable) + " unparseable; " +
           std::to_string(cat_stats.unmatched) + " uncategorized paths)");
  return 0;
}

struct SplitArgs {
  std::string in;
  std::string out_train;
  std::string out_test;
  std::string out_unassigned;
  double ratio = 0.9;
  std::uint64_t seed = 0;
  std::string counts;
  bool force = false;
};

int cmd_split(SplitArgs args) {
  const fs::path in_dir = fs::path(args.in).parent_path();
  if (args.out_train.empty()) args.out_train = (in_dir / "train.jsonl").string();
  if (args.out_test.empty()) args.out_test = (in_dir / "test.jsonl").string();

  SplitConfig cfg;
  cfg.ratio_train = args.ratio;
  cfg.rng_seed = args.seed;
  cfg.exact_counts = parse_counts(args.counts);

  Manifest manifest = make_manifest(
      "split",
      {std::to_string(args.ratio), std::to_string(args.seed),
       counts_to_string(cfg.exact_counts)},
      {args.in});
  manifest.extra["seed"] = args.seed;
  if (can_skip_stage(args.out_train, manifest, args.force) &&
      can_skip_stage(args.out_test, manifest, args.force)) {
    log_info("split: outputs up to date, skipping");
    return 0;
  }

  const SplitResult result = split_corpus(load_corpus(args.in), cfg);
  save_corpus(args.out_train, result.train);
  save_corpus(args.out_test, result.test);
  write_manifest(args.out_train, manifest);
  write_manifest(args.out_test, manifest);
  if (!args.out_unassigned.empty()) {
    save_corpus(args.out_unassigned, result.unassigned);
    write_manifest(args.out_unassigned, manifest);
  }
  log_info("split: " + std::to_string(result.train.size()) + " train / " +
           std::to_string(result.test.size()) + " test / " +
           std::to_string(result.unassigned.size()) + " unassigned");
  return 0;
}

struct SampleArgs {
  std::string in;
  std::string endpoints;
  std::string endpoint;
  std::string out;
  int n = 16;
  bool logprobs = false;
  bool force = false;
};

int cmd_sample(const SampleArgs& args) {
  const Manifest manifest =
      make_manifest("sample", {args.endpoint, std::to_string(args.n)},
                    {args.in, args.endpoints});
  if (can_skip_stage(args.out, manifest, args.force)) {
    log_info("sample: output up to date, skipping");
    return 0;
  }

  ProverEndpoint ep = find_endpoint(load_endpoints(args.endpoints), args.endpoint);
  if (args.logprobs) ep.supports_logprobs = true;
  const auto backend = make_backend_for(ep);

  std::vector<ProofAttempt> attempts;
  for (const TheoremRecord& rec : load_corpus(args.in)) {
    const auto sampled = sample_proofs(*backend, ep, rec, args.n);
    attempts.insert(attempts.end(), sampled.begin(), sampled.end());
  }
  save_attempts(args.out, attempts);
  write_manifest(args.out, manifest);
  log_info("sample: " + std::to_string(attempts.size()) + " attempts");
  return 0;
}

struct VerifyArgs {
  std::string in;
  std::string corpus;
  std::string out;
  VerifierFlags verifier;
  bool force = false;
};

int cmd_verify(const VerifyArgs& args) {
  const Manifest manifest = make_manifest(
      "verify", {args.verifier.backend, std::to_string(args.verifier.timeout)},
      {args.in, args.corpus});
  if (can_skip_stage(args.out, manifest, args.force)) {
    log_info("verify: output up to date, skipping");
    return 0;
  }

  const VerifierConfig vcfg = args.verifier.to_config();
  const ParentIndex corpus = build_parent_index(load_corpus(args.corpus));

  std::vector<VerificationJob> jobs;
  for (const ProofAttempt& attempt : load_attempts(args.in)) {
    const auto rec = corpus.find(attempt.theorem_id);
    if (rec == corpus.end()) {
      log_warn("verify: no corpus record for " + attempt.theorem_id +
               "; attempt skipped");
      continue;
    }
    VerificationJob job;
    job.job_id = make_job_id(attempt.theorem_id, attempt.attempt_index);
    job.header = rec->second.header;
    job.statement = rec->second.statement;
    job.proof_candidate = extract_proof_candidate(attempt.completion);
    job.timeout_seconds = vcfg.default_timeout;
    jobs.push_back(std::move(job));
  }

  const std::vector<VerificationVerdict> verdicts = verify_batch(jobs, vcfg);
  save_verdicts(args.out, verdicts);
  write_manifest(args.out, manifest);

  std::size_t passed = 0;
  for (const auto& v : verdicts) passed += v.status == VerdictStatus::Pass;
  log_info("verify: " + std::to_string(passed) + "/" +
           std::to_string(verdicts.size()) + " passed");
  return 0;
}

// --- conjecture subcommands -------------------------------------------------

struct ConjectureGenArgs {
  std::string seeds;
  std::string endpoints;
  std::string endpoint;
  std::string out;
  std::string ledger;
  int k = 10;
  bool force = false;
};

int cmd_conjecture_gen(const ConjectureGenArgs& args) {
  const Manifest manifest =
      make_manifest("conjecture-gen", {args.endpoint, std::to_string(args.k)},
                    {args.seeds, args.endpoints});
  if (can_skip_stage(args.out, manifest, args.force)) {
    log_info("conjecture gen: output up to date, skipping");
    return 0;
  }

  const ProverEndpoint ep =
      find_endpoint(load_endpoints(args.endpoints), args.endpoint);
  const auto backend = make_backend_for(ep);
  const std::vector<TheoremRecord> seeds = load_corpus(args.seeds);

  std::vector<Conjecture> all;
  PipelineLedger ledger;
  ledger.n_seeds = seeds.size();
  for (const TheoremRecord& seed : seeds) {
    const auto generated = generate_conjectures(*backend, ep, seed, args.k);
    ledger.n_generated += generated.size();
    all.insert(all.end(), generated.begin(), generated.end());
  }

  save_conjectures(args.out, all);
  write_manifest(args.out, manifest);
  if (!args.ledger.empty()) {
    atomic_write_file(args.ledger, ledger.to_json().dump(2) + "\n");
  }
  log_info("conjecture gen: " + std::to_string(all.size()) + " conjectures from " +
           std::to_string(seeds.size()) + " seeds");
  return 0;
}

struct ConjectureFilterArgs {
  std::string in;
  std::string seeds;
  std::string endpoints;
  std::vector<std::string> endpoint_names;
  std::string out;
  std::string ledger;
  int n_proofs = 16;
  VerifierFlags verifier;
  bool force = false;
};

int cmd_conjecture_filter_syntax(const ConjectureFilterArgs& args) {
  const Manifest manifest = make_manifest("conjecture-filter-syntax",
                                          {args.verifier.backend},
                                          {args.in, args.seeds});
  if (can_skip_stage(args.out, manifest, args.force)) {
    log_info("conjecture filter-syntax: output up to date, skipping");
    return 0;
  }

  const VerifierConfig vcfg = args.verifier.to_config();
  const ParentIndex parents = build_parent_index(load_corpus(args.seeds));
  SyntaxFilterResult result =
      filter_syntax(load_conjectures(args.in), parents, vcfg);

  save_conjectures(args.out, result.conjectures);
  write_manifest(args.out, manifest);

  PipelineLedger ledger;
  ledger.n_generated = result.conjectures.size();
  ledger.n_syntax_ok = result.delta.n_syntax_ok;
  if (!args.ledger.empty()) {
    atomic_write_file(args.ledger, ledger.to_json().dump(2) + "\n");
  }
  log_info("conjecture filter-syntax: " +
           std::to_string(result.delta.n_syntax_ok) + " kept, " +
           std::to_string(result.rejected) + " rejected, " +
           std::to_string(result.pending_rerun) + " pending re-run");
  return 0;
}

int cmd_conjecture_filter_prove(const ConjectureFilterArgs& args) {
  const Manifest manifest = make_manifest(
      "conjecture-filter-prove",
      {args.verifier.backend, std::to_string(args.n_proofs)},
      {args.in, args.seeds, args.endpoints});
  if (can_skip_stage(args.out, manifest, args.force)) {
    log_info("conjecture filter-prove: output up to date, skipping");
    return 0;
  }

  const VerifierConfig vcfg = args.verifier.to_config();
  const ParentIndex parents = build_parent_index(load_corpus(args.seeds));
  const std::vector<ProverEndpoint> all = load_endpoints(args.endpoints);

  std::vector<ProverEndpoint> endpoints;
  if (args.endpoint_names.empty()) {
    endpoints = all;
  } else {
    for (const std::string& name : args.endpoint_names) {
      endpoints.push_back(find_endpoint(all, name));
    }
  }
  if (endpoints.empty()) {
    throw ConfigError("conjecture filter-prove: no endpoints configured");
  }
  const auto backend = make_routing_backend();

  ProvabilityFilterResult result =
      filter_provable(load_conjectures(args.in), endpoints, *backend,
                      args.n_proofs, parents, vcfg);

  save_conjectures(args.out, result.conjectures);
  write_manifest(args.out, manifest);
  if (!args.ledger.empty()) {
    PipelineLedger ledger;
    ledger.n_provable = result.delta.n_provable;
    Json j = ledger.to_json();
    j["budget_allocation"] = Json::object();
    for (const auto& [name, budget] : result.budget_allocation) {
      j["budget_allocation"][name] = budget;
    }
    atomic_write_file(args.ledger, j.dump(2) + "\n");
  }
  log_info("conjecture filter-prove: " + std::to_string(result.delta.n_provable) +
           " provable, " + std::to_string(result.rejected) + " rejected, " +
           std::to_string(result.pending_rerun) + " pending re-run");
  return 0;
}

struct ConjectureAssembleArgs {
  std::string seeds;
  std::string in;
  std::string out;
  std::string ledger;
  bool force = false;
};

int cmd_conjecture_assemble(const ConjectureAssembleArgs& args) {
  const Manifest manifest =
      make_manifest("conjecture-assemble", {}, {args.seeds, args.in});
  if (can_skip_stage(args.out, manifest, args.force)) {
    log_info("conjecture assemble: output up to date, skipping");
    return 0;
  }

  const std::vector<TheoremRecord> seeds = load_corpus(args.seeds);
  const std::vector<Conjecture> conjectures = load_conjectures(args.in);
  const ParentIndex parents = build_parent_index(seeds);

  const AssembleResult result = assemble_training_set(seeds, conjectures, parents);
  save_corpus(args.out, result.records);
  write_manifest(args.out, manifest);

  if (!args.ledger.empty()) {
    Json j;
    j["seeds"] = seeds.size();
    j["conjectures_pre_dedup"] = result.conjectures_pre_dedup;
    j["duplicates_removed"] = result.duplicates_removed;
    j["records"] = result.records.size();
    atomic_write_file(args.ledger, j.dump(2) + "\n");
  }
  log_info("conjecture assemble: " + std::to_string(result.records.size()) +
           " records (" + std::to_string(result.duplicates_removed) +
           " duplicates removed)");
  return 0;
}

// --- rl subcommands ----------------------------------------------------------

struct RlArgs {
  std::string in;          // verdicts (reward/advantage)
  std::string corpus;      // batch/raft
  std::string attempts;    // batch/raft
  std::string verdicts;    // batch/raft
  std::string out;
  std::string style = "deepseek";
  GrpoConfig grpo;
  std::size_t batch_size = 256;
  bool force = false;
};

int cmd_rl_reward(const RlArgs& args) {
  std::vector<Json> rows;
  for (const VerificationVerdict& v : load_verdicts(args.in)) {
    const auto [theorem_id, index] = parse_job_id(v.job_id);
    Json j;
    j["job_id"] = v.job_id;
    j["theorem_id"] = theorem_id;
    j["attempt_index"] = index;
    j["reward"] = reward(v);
    rows.push_back(std::move(j));
  }
  write_jsonl(args.out, rows);
  write_manifest(args.out, make_manifest("rl-reward", {}, {args.in}));
  log_info("rl reward: " + std::to_string(rows.size()) + " rewards");
  return 0;
}

int cmd_rl_advantage(const RlArgs& args) {
  args.grpo.validate();
  std::vector<Json> rows;
  std::size_t skipped = 0;
  for (const auto& [theorem_id, verdicts] : group_verdicts(load_verdicts(args.in))) {
    if (verdicts.size() != args.grpo.group_size) {
      ++skipped;
      continue;
    }
    std::vector<double> rewards;
    rewards.reserve(verdicts.size());
    for (const auto& v : verdicts) rewards.push_back(reward(v));
    Json j;
    j["prompt_id"] = theorem_id;
    j["rewards"] = rewards;
    j["advantages"] = advantages(rewards, args.grpo);
    rows.push_back(std::move(j));
  }
  write_jsonl(args.out, rows);
  write_manifest(args.out,
                 make_manifest("rl-advantage",
                               {std::to_string(args.grpo.group_size)},
                               {args.in}));
  if (skipped > 0) {
    log_warn("rl advantage: " + std::to_string(skipped) +
             " groups skipped (attempt count != group size)");
  }
  log_info("rl advantage: " + std::to_string(rows.size()) + " groups");
  return 0;
}

int cmd_rl_batch(const RlArgs& args) {
  const Manifest manifest = make_manifest(
      "rl-batch",
      {std::to_string(args.grpo.group_size), std::to_string(args.batch_size)},
      {args.corpus, args.attempts, args.verdicts});
  if (can_skip_stage(args.out, manifest, args.force)) {
    log_info("rl batch: output up to date, skipping");
    return 0;
  }

  const std::vector<TheoremRecord> ordered =
      curriculum_order(load_corpus(args.corpus));
  const AttemptsByTheorem joined = join_attempts_verdicts(
      load_attempts(args.attempts), load_verdicts(args.verdicts));

  const std::string corpus_hash = sha256_file_hex(args.corpus);
  const std::vector<TrainingBatch> batches =
      build_batches(ordered, joined, args.grpo, args.batch_size, corpus_hash);

  const PromptStyle style = prompt_style_from_string(args.style);
  ParentIndex by_id = build_parent_index(ordered);
  export_batches_jsonl(args.out, batches, [&](const std::string& id) {
    const auto it = by_id.find(id);
    return it == by_id.end() ? std::string() : render_prompt(it->second, style);
  });
  write_manifest(args.out, manifest);

  std::size_t groups = 0;
  for (const auto& b : batches) groups += b.groups.size();
  log_info("rl batch: " + std::to_string(batches.size()) + " batches, " +
           std::to_string(groups) + " groups");
  return 0;
}

int cmd_rl_raft(const RlArgs& args) {
  const Manifest manifest = make_manifest(
      "rl-raft", {args.style}, {args.corpus, args.attempts, args.verdicts});
  if (can_skip_stage(args.out, manifest, args.force)) {
    log_info("rl raft: output up to date, skipping");
    return 0;
  }

  const std::vector<TheoremRecord> records = load_corpus(args.corpus);
  const AttemptsByTheorem joined = join_attempts_verdicts(
      load_attempts(args.attempts), load_verdicts(args.verdicts));
  const std::vector<TheoremRecord> kept = raft_select(records, joined);

  const PromptStyle style = prompt_style_from_string(args.style);
  export_raft_jsonl(args.out, kept, [&](const TheoremRecord& rec) {
    return render_prompt(rec, style);
  });
  write_manifest(args.out, manifest);
  log_info("rl raft: " + std::to_string(kept.size()) + " supervised pairs from " +
           std::to_string(records.size()) + " records");
  return 0;
}

// --- eval subcommands ---------------------------------------------------------

struct EvalPassArgs {
  std::string verdicts;
  std::string corpus;
  std::string labels;
  std::string baseline;
  std::string out;
  std::string format = "text";
  int k = 16;
};

int cmd_eval_pass_at_k(const EvalPassArgs& args) {
  EvalConfig cfg;
  cfg.k = args.k;

  std::unordered_map<std::string, std::string> categories;
  if (!args.corpus.empty()) {
    for (const TheoremRecord& rec : load_corpus(args.corpus)) {
      categories[rec.id] = to_string(rec.category);
    }
    // Canonical row order for corpus-based reports; pre-labeled external
    // sets bring their own labels instead.
    if (args.labels.empty()) {
      for (Category c : {Category::Classical, Category::ParticleString,
                         Category::Relativity, Category::QFT}) {
        cfg.categories.push_back(to_string(c));
      }
    }
  }
  if (!args.labels.empty()) {
    for (const Json& j : read_jsonl(args.labels)) {
      categories[j.at("id").get<std::string>()] =
          j.at("category").get<std::string>();
    }
  }

  const EvalReport report =
      pass_at_k(group_verdicts(load_verdicts(args.verdicts)), categories, cfg);

  std::optional<EvalReport> baseline;
  if (!args.baseline.empty()) {
    baseline = report_from_json(Json::parse(read_file(args.baseline)));
  }

  const ReportFormat fmt =
      args.format == "json" ? ReportFormat::Json : ReportFormat::TextTable;
  const std::string rendered =
      render_report(report, fmt, baseline ? &*baseline : nullptr);
  std::cout << rendered;
  if (!args.out.empty()) {
    write_file(args.out, render_report(report, ReportFormat::Json,
                                       baseline ? &*baseline : nullptr));
    std::vector<std::string> inputs{args.verdicts};
    if (!args.corpus.empty()) inputs.push_back(args.corpus);
    if (!args.labels.empty()) inputs.push_back(args.labels);
    if (!args.baseline.empty()) inputs.push_back(args.baseline);
    write_manifest(args.out,
                   make_manifest("eval-pass-at-k",
                                 {std::to_string(args.k)}, inputs));
  }
  return 0;
}

struct EvalPplArgs {
  std::string train;
  std::string test;
  std::string endpoints;
  std::string endpoint;
  std::string out;
  std::string format = "text";
  int n = 16;
  int sample = 50;
  std::uint64_t seed = 0;
};

int cmd_eval_ppl(const EvalPplArgs& args) {
  EvalConfig cfg;
  cfg.n_ppl_samples = args.n;
  cfg.ppl_sample_count_per_split = args.sample;
  cfg.sample_seed = args.seed;

  const ProverEndpoint ep =
      find_endpoint(load_endpoints(args.endpoints), args.endpoint);
  const auto backend = make_backend_for(ep);

  std::vector<TheoremRecord> train, test;
  if (!args.train.empty()) train = load_corpus(args.train);
  if (!args.test.empty()) test = load_corpus(args.test);

  const PerplexityReport report = ppl_probe(train, test, *backend, ep, cfg);
  const ReportFormat fmt =
      args.format == "json" ? ReportFormat::Json : ReportFormat::TextTable;
  std::cout << render_ppl_report(report, fmt);
  if (!args.out.empty()) {
    write_file(args.out, render_ppl_report(report, ReportFormat::Json));
    std::vector<std::string> inputs{args.endpoints};
    if (!args.train.empty()) inputs.push_back(args.train);
    if (!args.test.empty()) inputs.push_back(args.test);
    Manifest manifest = make_manifest(
        "eval-ppl",
        {args.endpoint, std::to_string(args.n), std::to_string(args.sample)},
        inputs);
    manifest.extra["seed"] = args.seed;
    write_manifest(args.out, manifest);
  }
  return 0;
}

// --- pipeline -----------------------------------------------------------------

struct PipelineArgs {
  std::string config;
  bool force = false;
};

int cmd_pipeline(const PipelineArgs& args) {
  PipelineConfig cfg = PipelineConfig::load(args.config);
  cfg.validate();
  const fs::path work(cfg.work_dir);

  // Stage 1: extract + categorize.
  const std::string corpus_path = (work / "corpus.jsonl").string();
  {
    const Manifest manifest = make_manifest(
        "pipeline-extract",
        {cfg.corpus_root, std::to_string(cfg.max_tokens), cfg.token_estimator},
        {});
    if (can_skip_stage(corpus_path, manifest, args.force)) {
      log_info("pipeline: extract up to date, skipping");
    } else {
      ExtractOptions opts;
      opts.max_tokens = cfg.max_tokens;
      opts.estimator = token_estimator_by_name(cfg.token_estimator);
      opts.workers = cfg.jobs;
      std::vector<TheoremRecord> records = extract_corpus(cfg.corpus_root, opts);
      assign_categories(records, default_category_rules());
      save_corpus(corpus_path, records);
      write_manifest(corpus_path, manifest);
      log_info("pipeline: extracted " + std::to_string(records.size()) +
               " records");
    }
  }

  // Stage 2: split.
  const std::string train_path = (work / "train.jsonl").string();
  const std::string test_path = (work / "test.jsonl").string();
  {
    SplitConfig scfg;
    scfg.ratio_train = cfg.split_ratio;
    scfg.rng_seed = cfg.seed_for("split");
    scfg.exact_counts = cfg.split_counts;
    Manifest manifest = make_manifest(
        "pipeline-split",
        {std::to_string(scfg.ratio_train), std::to_string(scfg.rng_seed),
         counts_to_string(scfg.exact_counts)},
        {corpus_path});
    manifest.extra["seed"] = scfg.rng_seed;
    if (can_skip_stage(train_path, manifest, args.force) &&
        can_skip_stage(test_path, manifest, args.force)) {
      log_info("pipeline: split up to date, skipping");
    } else {
      const SplitResult split = split_corpus(load_corpus(corpus_path), scfg);
      save_corpus(train_path, split.train);
      save_corpus(test_path, split.test);
      write_manifest(train_path, manifest);
      write_manifest(test_path, manifest);
      log_info("pipeline: split " + std::to_string(split.train.size()) +
               " train / " + std::to_string(split.test.size()) + " test");
    }
  }

  // Stage 3: conjecture generation + filtering.
  const std::string conj_path = (work / "conjectures.jsonl").string();
  const std::string ledger_path = (work / "ledger.json").string();
  PipelineLedger ledger;
  {
    if (cfg.conjecture_endpoint.empty()) {
      throw ConfigError("config: conjecture_endpoint is required for pipeline");
    }
    const ProverEndpoint gen_ep = cfg.endpoint_by_name(cfg.conjecture_endpoint);
    std::vector<ProverEndpoint> prover_eps;
    for (const std::string& name : cfg.prover_endpoints) {
      prover_eps.push_back(cfg.endpoint_by_name(name));
    }
    if (prover_eps.empty()) {
      throw ConfigError("config: prover_endpoints is required for pipeline");
    }

    const Manifest manifest = make_manifest(
        "pipeline-conjectures",
        {cfg.conjecture_endpoint, std::to_string(cfg.conjectures_per_seed),
         std::to_string(cfg.provability_samples)},
        {train_path});
    if (can_skip_stage(conj_path, manifest, args.force)) {
      log_info("pipeline: conjectures up to date, skipping");
      for (const Conjecture& c : load_conjectures(conj_path)) {
        ++ledger.n_generated;
        if (c.stage == ConjectureStage::SyntaxOk ||
            c.stage == ConjectureStage::Provable) {
          ++ledger.n_syntax_ok;
        }
        if (c.stage == ConjectureStage::Provable) ++ledger.n_provable;
      }
      ledger.n_seeds = load_corpus(train_path).size();
    } else {
      const std::vector<TheoremRecord> seeds = load_corpus(train_path);
      ledger.n_seeds = seeds.size();

      const auto gen_backend = make_backend_for(gen_ep);
      std::vector<Conjecture> conjectures;
      for (const TheoremRecord& seed : seeds) {
        const auto generated = generate_conjectures(*gen_backend, gen_ep, seed,
                                                    cfg.conjectures_per_seed);
        conjectures.insert(conjectures.end(), generated.begin(), generated.end());
      }
      ledger.n_generated = conjectures.size();

      const ParentIndex parents = build_parent_index(seeds);
      SyntaxFilterResult syntax =
          filter_syntax(std::move(conjectures), parents, cfg.verifier);
      ledger.n_syntax_ok = syntax.delta.n_syntax_ok;

      const auto prove_backend = make_routing_backend();
      ProvabilityFilterResult provable = filter_provable(
          std::move(syntax.conjectures), prover_eps, *prove_backend,
          cfg.provability_samples, parents, cfg.verifier);
      ledger.n_provable = provable.delta.n_provable;

      save_conjectures(conj_path, provable.conjectures);
      write_manifest(conj_path, manifest);
      Json ledger_json = ledger.to_json();
      ledger_json["budget_allocation"] = Json::object();
      for (const auto& [name, budget] : provable.budget_allocation) {
        ledger_json["budget_allocation"][name] = budget;
      }
      atomic_write_file(ledger_path, ledger_json.dump(2) + "\n");
      log_info("pipeline: conjectures\n" + ledger.render_text());
    }
  }

  // Stage 4: assemble.
  const std::string assembled_path = (work / "assembled.jsonl").string();
  {
    const Manifest manifest =
        make_manifest("pipeline-assemble", {}, {train_path, conj_path});
    if (can_skip_stage(assembled_path, manifest, args.force)) {
      log_info("pipeline: assemble up to date, skipping");
    } else {
      const std::vector<TheoremRecord> seeds = load_corpus(train_path);
      const AssembleResult assembled = assemble_training_set(
          seeds, load_conjectures(conj_path), build_parent_index(seeds));
      save_corpus(assembled_path, assembled.records);
      write_manifest(assembled_path, manifest);
      log_info("pipeline: assembled " + std::to_string(assembled.records.size()) +
               " training records (" +
               std::to_string(assembled.duplicates_removed) + " duplicates removed)");
    }
  }

  // Stage 5: GRPO rollout sampling, verification and batch export.
  const std::string batches_path = (work / "batches.jsonl").string();
  {
    const Manifest manifest = make_manifest(
        "pipeline-batches",
        {std::to_string(cfg.grpo.group_size), std::to_string(cfg.batch_size)},
        {assembled_path});
    if (can_skip_stage(batches_path, manifest, args.force)) {
      log_info("pipeline: batches up to date, skipping");
    } else {
      const std::vector<TheoremRecord> ordered =
          curriculum_order(load_corpus(assembled_path));
      const ProverEndpoint rollout_ep =
          cfg.endpoint_by_name(cfg.prover_endpoints.front());
      const auto backend = make_backend_for(rollout_ep);

      std::vector<ProofAttempt> attempts;
      std::vector<VerificationJob> jobs;
      for (const TheoremRecord& rec : ordered) {
        const auto sampled = sample_proofs(
            *backend, rollout_ep, rec, static_cast<int>(cfg.grpo.group_size));
        for (const ProofAttempt& attempt : sampled) {
          VerificationJob job;
          job.job_id = make_job_id(rec.id, attempt.attempt_index);
          job.header = rec.header;
          job.statement = rec.statement;
          job.proof_candidate = extract_proof_candidate(attempt.completion);
          job.timeout_seconds = cfg.verifier.default_timeout;
          jobs.push_back(std::move(job));
        }
        attempts.insert(attempts.end(), sampled.begin(), sampled.end());
      }
      const std::vector<VerificationVerdict> verdicts =
          verify_batch(jobs, cfg.verifier);
      const AttemptsByTheorem joined = join_attempts_verdicts(attempts, verdicts);

      const std::vector<TrainingBatch> batches =
          build_batches(ordered, joined, cfg.grpo, cfg.batch_size,
                        sha256_file_hex(assembled_path));
      ParentIndex by_id = build_parent_index(ordered);
      export_batches_jsonl(batches_path, batches, [&](const std::string& id) {
        const auto it = by_id.find(id);
        return it == by_id.end()
                   ? std::string()
                   : render_prompt(it->second, rollout_ep.style);
      });
      write_manifest(batches_path, manifest);
      std::size_t groups = 0;
      for (const auto& b : batches) groups += b.groups.size();
      log_info("pipeline: exported " + std::to_string(batches.size()) +
               " batches (" + std::to_string(groups) + " groups)");
    }
  }

  log_info("pipeline: done");
  return 0;
}

}  // namespace

// ---------------------------------------------------------------------------

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  static const char* kName = "physforge";
  argv.push_back(kName);
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Lean theorem-proving dataset and RL pipeline toolkit"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  // extract
  ExtractArgs extract_args;
  CLI::App* extract = app.add_subcommand("extract", "Mine lemma records from a Lean tree");
  extract->add_option("--root", extract_args.root, "Lean source root")->required();
  extract->add_option("--max-tokens", extract_args.max_tokens, "Strict token budget");
  extract->add_option("--out", extract_args.out, "Output corpus JSONL")->required();
  extract->add_option("--jobs", extract_args.jobs, "Parallel file workers");
  extract->add_option("--token-mode", extract_args.token_mode, "Token estimator name");
  extract->add_option("--category-rules", extract_args.category_rules,
                      "JSON file of {path_component, category} rules");
  extract->add_flag("--force", extract_args.force, "Re-run even if up to date");

  // split
  SplitArgs split_args;
  CLI::App* split = app.add_subcommand("split", "Deterministic train/test split");
  split->add_option("--in", split_args.in, "Corpus JSONL")->required();
  split->add_option("--ratio", split_args.ratio, "Train fraction in (0,1)");
  split->add_option("--seed", split_args.seed, "Shuffle seed");
  split->add_option("--counts", split_args.counts, "Exact \"<train>,<test>\" counts");
  split->add_option("--out-train", split_args.out_train, "Train output path");
  split->add_option("--out-test", split_args.out_test, "Test output path");
  split->add_option("--out-unassigned", split_args.out_unassigned,
                    "Unassigned remainder output path");
  split->add_flag("--force", split_args.force, "Re-run even if up to date");

  // sample
  SampleArgs sample_args;
  CLI::App* sample = app.add_subcommand("sample", "Sample proof attempts from an endpoint");
  sample->add_option("--in", sample_args.in, "Corpus JSONL")->required();
  sample->add_option("--endpoints", sample_args.endpoints, "Endpoint config JSON")->required();
  sample->add_option("--endpoint", sample_args.endpoint, "Endpoint name")->required();
  sample->add_option("--n", sample_args.n, "Samples per record");
  sample->add_option("--out", sample_args.out, "Attempts JSONL")->required();
  sample->add_flag("--logprobs", sample_args.logprobs, "Request token logprobs");
  sample->add_flag("--force", sample_args.force, "Re-run even if up to date");

  // verify
  VerifyArgs verify_args;
  CLI::App* verify_cmd = app.add_subcommand("verify", "Check attempts with the Lean verifier");
  verify_cmd->add_option("--in", verify_args.in, "Attempts JSONL")->required();
  verify_cmd->add_option("--corpus", verify_args.corpus, "Corpus JSONL for headers")->required();
  verify_cmd->add_option("--out", verify_args.out, "Verdicts JSONL")->required();
  verify_args.verifier.attach(verify_cmd);
  verify_cmd->add_flag("--force", verify_args.force, "Re-run even if up to date");

  // conjecture
  CLI::App* conjecture = app.add_subcommand("conjecture", "Conjecture pipeline stages");
  conjecture->require_subcommand(1);

  ConjectureGenArgs gen_args;
  CLI::App* gen = conjecture->add_subcommand("gen", "Generate conjectures from seeds");
  gen->add_option("--seeds,--in", gen_args.seeds, "Seed corpus JSONL")->required();
  gen->add_option("--endpoints", gen_args.endpoints, "Endpoint config JSON")->required();
  gen->add_option("--endpoint", gen_args.endpoint, "Generation endpoint name")->required();
  gen->add_option("--k", gen_args.k, "Conjectures per seed");
  gen->add_option("--out", gen_args.out, "Conjecture JSONL")->required();
  gen->add_option("--ledger", gen_args.ledger, "Ledger JSON output");
  gen->add_flag("--force", gen_args.force, "Re-run even if up to date");

  ConjectureFilterArgs syntax_args;
  CLI::App* fsyntax = conjecture->add_subcommand("filter-syntax", "Statement well-formedness filter");
  fsyntax->add_option("--in", syntax_args.in, "Conjecture JSONL")->required();
  fsyntax->add_option("--seeds", syntax_args.seeds, "Seed corpus JSONL")->required();
  fsyntax->add_option("--out", syntax_args.out, "Filtered conjecture JSONL")->required();
  fsyntax->add_option("--ledger", syntax_args.ledger, "Ledger JSON output");
  syntax_args.verifier.attach(fsyntax);
  fsyntax->add_flag("--force", syntax_args.force, "Re-run even if up to date");

  ConjectureFilterArgs prove_args;
  CLI::App* fprove = conjecture->add_subcommand("filter-prove", "Provability filter");
  fprove->add_option("--in", prove_args.in, "Conjecture JSONL")->required();
  fprove->add_option("--seeds", prove_args.seeds, "Seed corpus JSONL")->required();
  fprove->add_option("--endpoints", prove_args.endpoints, "Endpoint config JSON")->required();
  fprove->add_option("--endpoint", prove_args.endpoint_names,
                     "Prover endpoint name (repeatable)");
  fprove->add_option("--n-proofs", prove_args.n_proofs, "Proof samples per conjecture");
  fprove->add_option("--out", prove_args.out, "Filtered conjecture JSONL")->required();
  fprove->add_option("--ledger", prove_args.ledger, "Ledger JSON output");
  prove_args.verifier.attach(fprove);
  fprove->add_flag("--force", prove_args.force, "Re-run even if up to date");

  ConjectureAssembleArgs assemble_args;
  CLI::App* assemble = conjecture->add_subcommand("assemble", "Merge seeds and provable conjectures");
  assemble->add_option("--seeds", assemble_args.seeds, "Seed train JSONL")->required();
  assemble->add_option("--in", assemble_args.in, "Conjecture JSONL")->required();
  assemble->add_option("--out", assemble_args.out, "Assembled corpus JSONL")->required();
  assemble->add_option("--ledger", assemble_args.ledger, "Ledger JSON output");
  assemble->add_flag("--force", assemble_args.force, "Re-run even if up to date");

  // rl
  CLI::App* rl = app.add_subcommand("rl", "Reward, advantage, batch and RAFT exports");
  rl->require_subcommand(1);

  RlArgs reward_args;
  CLI::App* rreward = rl->add_subcommand("reward", "Binary rewards from verdicts");
  rreward->add_option("--in", reward_args.in, "Verdicts JSONL")->required();
  rreward->add_option("--out", reward_args.out, "Rewards JSONL")->required();

  RlArgs adv_args;
  CLI::App* radv = rl->add_subcommand("advantage", "Group-relative advantages");
  radv->add_option("--in", adv_args.in, "Verdicts JSONL")->required();
  radv->add_option("--out", adv_args.out, "Advantages JSONL")->required();
  radv->add_option("--group-size", adv_args.grpo.group_size, "Samples per prompt");
  radv->add_option("--clip-eps", adv_args.grpo.clip_eps, "Clip half-width");
  radv->add_option("--kl-beta", adv_args.grpo.kl_beta, "KL penalty weight");
  radv->add_option("--std-floor", adv_args.grpo.std_floor, "Degenerate-group floor");

  RlArgs batch_args;
  CLI::App* rbatch = rl->add_subcommand("batch", "Curriculum-ordered GRPO batch export");
  rbatch->add_option("--corpus", batch_args.corpus, "Training corpus JSONL")->required();
  rbatch->add_option("--attempts", batch_args.attempts, "Attempts JSONL")->required();
  rbatch->add_option("--verdicts", batch_args.verdicts, "Verdicts JSONL")->required();
  rbatch->add_option("--out", batch_args.out, "Batches JSONL")->required();
  rbatch->add_option("--group-size", batch_args.grpo.group_size, "Samples per prompt");
  rbatch->add_option("--clip-eps", batch_args.grpo.clip_eps, "Clip half-width");
  rbatch->add_option("--kl-beta", batch_args.grpo.kl_beta, "KL penalty weight");
  rbatch->add_option("--batch-size", batch_args.batch_size, "Groups per batch");
  rbatch->add_option("--style", batch_args.style, "Prompt style for prompt_text");
  rbatch->add_flag("--force", batch_args.force, "Re-run even if up to date");

  RlArgs raft_args;
  CLI::App* rraft = rl->add_subcommand("raft", "Rejection-sampling dataset export");
  rraft->add_option("--corpus", raft_args.corpus, "Corpus JSONL")->required();
  rraft->add_option("--attempts", raft_args.attempts, "Attempts JSONL")->required();
  rraft->add_option("--verdicts", raft_args.verdicts, "Verdicts JSONL")->required();
  rraft->add_option("--out", raft_args.out, "Supervised pairs JSONL")->required();
  rraft->add_option("--style", raft_args.style, "Prompt style for prompt_text");
  rraft->add_flag("--force", raft_args.force, "Re-run even if up to date");

  // eval
  CLI::App* eval = app.add_subcommand("eval", "Evaluation harness");
  eval->require_subcommand(1);

  EvalPassArgs pass_args;
  CLI::App* pass = eval->add_subcommand("pass-at-k", "pass@k over verified attempts");
  pass->add_option("--k", pass_args.k, "Sampling budget k");
  pass->add_option("--verdicts", pass_args.verdicts, "Verdicts JSONL")->required();
  pass->add_option("--corpus", pass_args.corpus, "Corpus JSONL for categories");
  pass->add_option("--labels", pass_args.labels,
                   "Pre-labeled JSONL {id, category} for external sets");
  pass->add_option("--baseline", pass_args.baseline, "Baseline report JSON for deltas");
  pass->add_option("--out", pass_args.out, "Report JSON output");
  pass->add_option("--format", pass_args.format, "text or json");

  EvalPplArgs ppl_args;
  CLI::App* ppl = eval->add_subcommand("ppl", "Perplexity probe");
  ppl->add_option("--train", ppl_args.train, "Train corpus JSONL");
  ppl->add_option("--test", ppl_args.test, "Test corpus JSONL");
  ppl->add_option("--endpoints", ppl_args.endpoints, "Endpoint config JSON")->required();
  ppl->add_option("--endpoint", ppl_args.endpoint, "Endpoint name")->required();
  ppl->add_option("--n", ppl_args.n, "Samples per prompt");
  ppl->add_option("--sample", ppl_args.sample, "Records sampled per split");
  ppl->add_option("--seed", ppl_args.seed, "Sampling seed");
  ppl->add_option("--out", ppl_args.out, "Report JSON output");
  ppl->add_option("--format", ppl_args.format, "text or json");

  // top-level alias: `physforge ppl ...`
  EvalPplArgs ppl_alias_args;
  CLI::App* ppl_alias = app.add_subcommand("ppl", "Perplexity probe (alias of eval ppl)");
  ppl_alias->add_option("--train", ppl_alias_args.train, "Train corpus JSONL");
  ppl_alias->add_option("--test", ppl_alias_args.test, "Test corpus JSONL");
  ppl_alias->add_option("--endpoints", ppl_alias_args.endpoints, "Endpoint config JSON")->required();
  ppl_alias->add_option("--endpoint", ppl_alias_args.endpoint, "Endpoint name")->required();
  ppl_alias->add_option("--n", ppl_alias_args.n, "Samples per prompt");
  ppl_alias->add_option("--sample", ppl_alias_args.sample, "Records sampled per split");
  ppl_alias->add_option("--seed", ppl_alias_args.seed, "Sampling seed");
  ppl_alias->add_option("--out", ppl_alias_args.out, "Report JSON output");
  ppl_alias->add_option("--format", ppl_alias_args.format, "text or json");

  // pipeline
  PipelineArgs pipeline_args;
  CLI::App* pipeline = app.add_subcommand("pipeline", "Run the whole chain from a config file");
  pipeline->add_option("--config", pipeline_args.config, "Pipeline config JSON")->required();
  pipeline->add_flag("--force", pipeline_args.force, "Re-run every stage");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    std::cerr << "run 'physforge --help' for usage\n";
    return 2;
  }

  try {
    if (app.got_subcommand(extract)) return cmd_extract(extract_args);
    if (app.got_subcommand(split)) return cmd_split(split_args);
    if (app.got_subcommand(sample)) return cmd_sample(sample_args);
    if (app.got_subcommand(verify_cmd)) return cmd_verify(verify_args);
    if (app.got_subcommand(conjecture)) {
      if (conjecture->got_subcommand(gen)) return cmd_conjecture_gen(gen_args);
      if (conjecture->got_subcommand(fsyntax)) {
        return cmd_conjecture_filter_syntax(syntax_args);
      }
      if (conjecture->got_subcommand(fprove)) {
        return cmd_conjecture_filter_prove(prove_args);
      }
      if (conjecture->got_subcommand(assemble)) {
        return cmd_conjecture_assemble(assemble_args);
      }
    }
    if (app.got_subcommand(rl)) {
      if (rl->got_subcommand(rreward)) return cmd_rl_reward(reward_args);
      if (rl->got_subcommand(radv)) return cmd_rl_advantage(adv_args);
      if (rl->got_subcommand(rbatch)) return cmd_rl_batch(batch_args);
      if (rl->got_subcommand(rraft)) return cmd_rl_raft(raft_args);
    }
    if (app.got_subcommand(eval)) {
      if (eval->got_subcommand(pass)) return cmd_eval_pass_at_k(pass_args);
      if (eval->got_subcommand(ppl)) return cmd_eval_ppl(ppl_args);
    }
    if (app.got_subcommand(ppl_alias)) return cmd_eval_ppl(ppl_alias_args);
    if (app.got_subcommand(pipeline)) return cmd_pipeline(pipeline_args);
    std::cerr << "no subcommand given; run 'physforge --help'\n";
    return 2;
  } catch (const ConfigError& e) {
    log_error(e.what());
    return 1;
  } catch (const std::exception& e) {
    log_error(e.what());
    return 1;
  }
}

}  // namespace physforge
