#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "physforge/evalharness.hpp"
#include "physforge/provers.hpp"
#include "physforge/rlengine.hpp"
#include "physforge/verifier.hpp"

namespace physforge {

/// Whole-pipeline configuration file. String values support ${ENV_VAR}
/// interpolation so secrets stay out of the file; flags override config.
struct PipelineConfig {
  // paths
  std::string corpus_root;
  std::string work_dir;
  std::string project_dir;

  // corpus
  std::size_t max_tokens = 4096;
  std::string token_estimator = "whitespace";
  double split_ratio = 0.9;
  std::optional<std::pair<std::size_t, std::size_t>> split_counts;

  // verifier
  VerifierConfig verifier;
  std::string stub_table_path;

  // endpoints
  std::vector<ProverEndpoint> endpoints;
  std::string conjecture_endpoint;  // endpoint name used for generation
  std::vector<std::string> prover_endpoints;  // names used for provability

  // conjectures
  int conjectures_per_seed = 10;
  int provability_samples = 16;

  // rl
  GrpoConfig grpo;
  std::size_t batch_size = 256;

  // eval
  EvalConfig eval;

  // seeds per stage (e.g. "split", "ppl_sample")
  std::map<std::string, std::uint64_t> seeds;

  std::size_t jobs = 1;

  std::uint64_t seed_for(const std::string& stage) const;
  const ProverEndpoint& endpoint_by_name(const std::string& name) const;

  static PipelineConfig from_json(const Json& j);
  static PipelineConfig load(const std::string& path);
  void validate() const;  // throws ConfigError naming the offending field
};

/// Replaces ${VAR} with the environment value; throws ConfigError naming the
/// variable when it is unset.
std::string interpolate_env(const std::string& value);

}  // namespace physforge
