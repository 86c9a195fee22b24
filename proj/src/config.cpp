#include "physforge/config.hpp"

#include <cstdlib>
#include <filesystem>

#include "physforge/errors.hpp"
#include "physforge/util/strings.hpp"

namespace physforge {

std::string interpolate_env(const std::string& value) {
  std::string out;
  std::size_t pos = 0;
  while (pos < value.size()) {
    const std::size_t open = value.find("${", pos);
    if (open == std::string::npos) {
      out += value.substr(pos);
      break;
    }
    const std::size_t close = value.find('}', open + 2);
    if (close == std::string::npos) {
      out += value.substr(pos);
      break;
    }
    out += value.substr(pos, open - pos);
    const std::string name = value.substr(open + 2, close - open - 2);
    const char* env = std::getenv(name.c_str());
    if (env == nullptr) {
      throw ConfigError("config: environment variable not set: " + name);
    }
    out += env;
    pos = close + 1;
  }
  return out;
}

namespace {

std::string get_string(const Json& j, const std::string& key,
                       const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  return interpolate_env(j.at(key).get<std::string>());
}

}  // namespace

std::uint64_t PipelineConfig::seed_for(const std::string& stage) const {
  const auto it = seeds.find(stage);
  return it == seeds.end() ? 0 : it->second;
}

const ProverEndpoint& PipelineConfig::endpoint_by_name(const std::string& name) const {
  for (const ProverEndpoint& ep : endpoints) {
    if (ep.name == name) return ep;
  }
  throw ConfigError("config: unknown endpoint name: " + name);
}

PipelineConfig PipelineConfig::from_json(const Json& j) {
  PipelineConfig cfg;

  if (j.contains("paths")) {
    const Json& paths = j.at("paths");
    cfg.corpus_root = get_string(paths, "corpus_root", "");
    cfg.work_dir = get_string(paths, "work_dir", "");
    cfg.project_dir = get_string(paths, "project_dir", "");
  }

  if (j.contains("corpus")) {
    const Json& c = j.at("corpus");
    cfg.max_tokens = c.value("max_tokens", cfg.max_tokens);
    cfg.token_estimator = c.value("token_estimator", cfg.token_estimator);
    cfg.split_ratio = c.value("split_ratio", cfg.split_ratio);
    if (c.contains("split_counts")) {
      const Json& sc = c.at("split_counts");
      cfg.split_counts = {sc.at(0).get<std::size_t>(), sc.at(1).get<std::size_t>()};
    }
  }

  if (j.contains("verifier")) {
    const Json& v = j.at("verifier");
    const std::string backend = v.value("backend", std::string("lean_toolchain"));
    if (backend == "stub") {
      cfg.verifier.backend = VerifierBackend::Stub;
    } else if (backend == "lean_toolchain") {
      cfg.verifier.backend = VerifierBackend::LeanToolchain;
    } else {
      throw ConfigError("config: verifier.backend must be lean_toolchain or stub");
    }
    cfg.verifier.project_dir = get_string(v, "project_dir", cfg.project_dir);
    cfg.verifier.toolchain_version =
        v.value("toolchain_version", cfg.verifier.toolchain_version);
    cfg.verifier.max_parallel = v.value("max_parallel", cfg.verifier.max_parallel);
    cfg.verifier.default_timeout =
        v.value("default_timeout", cfg.verifier.default_timeout);
    if (v.contains("cache_dir")) {
      cfg.verifier.cache_dir = get_string(v, "cache_dir", "");
    }
    if (v.contains("compile_command")) {
      cfg.verifier.compile_command =
          v.at("compile_command").get<std::vector<std::string>>();
    }
    cfg.stub_table_path = get_string(v, "stub_table", "");
  }
  if (cfg.verifier.project_dir.empty()) {
    cfg.verifier.project_dir = cfg.project_dir;
  }

  if (j.contains("endpoints")) {
    Json list = j.at("endpoints");
    for (Json& e : list) {
      for (const char* key : {"base_url", "api_key_env", "model_id"}) {
        if (e.contains(key)) {
          e[key] = interpolate_env(e.at(key).get<std::string>());
        }
      }
    }
    cfg.endpoints = endpoints_from_json(list);
  }
  cfg.conjecture_endpoint = j.value("conjecture_endpoint", std::string());
  if (j.contains("prover_endpoints")) {
    cfg.prover_endpoints =
        j.at("prover_endpoints").get<std::vector<std::string>>();
  }

  if (j.contains("conjectures")) {
    const Json& c = j.at("conjectures");
    cfg.conjectures_per_seed = c.value("per_seed", cfg.conjectures_per_seed);
    cfg.provability_samples = c.value("provability_samples", cfg.provability_samples);
  }

  if (j.contains("grpo")) {
    const Json& g = j.at("grpo");
    cfg.grpo.group_size = g.value("group_size", cfg.grpo.group_size);
    cfg.grpo.clip_eps = g.value("clip_eps", cfg.grpo.clip_eps);
    cfg.grpo.kl_beta = g.value("kl_beta", cfg.grpo.kl_beta);
    cfg.grpo.std_floor = g.value("std_floor", cfg.grpo.std_floor);
    cfg.batch_size = g.value("batch_size", cfg.batch_size);
  }

  if (j.contains("eval")) {
    const Json& e = j.at("eval");
    cfg.eval.k = e.value("k", cfg.eval.k);
    if (e.contains("categories")) {
      cfg.eval.categories = e.at("categories").get<std::vector<std::string>>();
    }
    cfg.eval.n_ppl_samples = e.value("n_ppl_samples", cfg.eval.n_ppl_samples);
    cfg.eval.ppl_sample_count_per_split =
        e.value("ppl_sample_count_per_split", cfg.eval.ppl_sample_count_per_split);
  }

  if (j.contains("seeds")) {
    for (const auto& [stage, seed] : j.at("seeds").items()) {
      cfg.seeds[stage] = seed.get<std::uint64_t>();
    }
  }
  cfg.eval.sample_seed = cfg.seed_for("ppl_sample");

  cfg.jobs = j.value("jobs", cfg.jobs);
  return cfg;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  PipelineConfig cfg = from_json(j);
  if (!cfg.stub_table_path.empty()) {
    cfg.verifier.stub = std::make_shared<StubTable>(
        StubTable::load(cfg.stub_table_path));
  }
  return cfg;
}

void PipelineConfig::validate() const {
  namespace fs = std::filesystem;
  if (corpus_root.empty() || !fs::is_directory(corpus_root)) {
    throw ConfigError("config: paths.corpus_root is not a directory: " +
                      corpus_root);
  }
  if (work_dir.empty()) {
    throw ConfigError("config: paths.work_dir is required");
  }
  fs::create_directories(work_dir);
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) {
    throw ConfigError("config: corpus.split_ratio must lie in (0,1)");
  }
  if (verifier.backend == VerifierBackend::Stub && !verifier.stub) {
    throw ConfigError("config: verifier.stub_table is required for the stub backend");
  }
  if (verifier.max_parallel < 1) {
    throw ConfigError("config: verifier.max_parallel must be >= 1");
  }
  grpo.validate();
  eval.validate();
  if (!conjecture_endpoint.empty()) {
    endpoint_by_name(conjecture_endpoint);
  }
  for (const std::string& name : prover_endpoints) {
    endpoint_by_name(name);
  }
}

}  // namespace physforge
