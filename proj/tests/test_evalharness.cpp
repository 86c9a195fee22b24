#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "physforge/errors.hpp"
#include "physforge/evalharness.hpp"
#include "physforge/util/rng.hpp"

using namespace physforge;
using physforge::testing::simple_record;

namespace {

VerificationVerdict verdict(VerdictStatus status) {
  VerificationVerdict v;
  v.status = status;
  return v;
}

std::vector<VerificationVerdict> verdict_row(int passes, int total) {
  std::vector<VerificationVerdict> out;
  for (int i = 0; i < total; ++i) {
    out.push_back(verdict(i < passes ? VerdictStatus::Pass : VerdictStatus::Fail));
  }
  return out;
}

ProofAttempt attempt_with_logprobs(const std::string& id,
                                   std::vector<double> logprobs) {
  ProofAttempt a;
  a.theorem_id = id;
  std::vector<TokenLogprob> lps;
  for (double lp : logprobs) lps.push_back({"t", lp});
  a.token_logprobs = std::move(lps);
  return a;
}

}  // namespace

TEST_CASE("pass_at_k counts solved theorems per category") {
  std::map<std::string, std::vector<VerificationVerdict>> verdicts;
  std::unordered_map<std::string, std::string> categories;

  // Three theorems: solved, unsolved, solved-beyond-budget.
  verdicts["t1"] = verdict_row(1, 16);
  verdicts["t2"] = verdict_row(0, 16);
  std::vector<VerificationVerdict> late(16, verdict(VerdictStatus::Fail));
  late.push_back(verdict(VerdictStatus::Pass));  // the 17th attempt passes
  verdicts["t3"] = late;
  categories["t1"] = "Classical";
  categories["t2"] = "QFT";
  categories["t3"] = "QFT";

  EvalConfig cfg;
  cfg.k = 16;
  const EvalReport report = pass_at_k(verdicts, categories, cfg);
  CHECK(report.overall.total == 3);
  CHECK(report.overall.solved == 1);  // attempt 17 is beyond the budget
  bool found_qft = false;
  for (const auto& row : report.categories) {
    if (row.label == "QFT") {
      found_qft = true;
      CHECK(row.total == 2);
      CHECK(row.solved == 0);
    }
  }
  CHECK(found_qft);

  SUBCASE("one theorem with all fails is 0/1") {
    std::map<std::string, std::vector<VerificationVerdict>> one;
    one["only"] = verdict_row(0, 16);
    const auto r = pass_at_k(one, {}, cfg);
    CHECK(r.overall.total == 1);
    CHECK(r.overall.solved == 0);
  }

  SUBCASE("underfilled theorems are flagged but counted") {
    std::map<std::string, std::vector<VerificationVerdict>> short_row;
    short_row["s"] = verdict_row(1, 4);
    const auto r = pass_at_k(short_row, {}, cfg);
    CHECK(r.overall.solved == 1);
    CHECK(r.metadata.at("underfilled") == 1);
  }

  SUBCASE("k = 1 is first-attempt accuracy") {
    EvalConfig k1;
    k1.k = 1;
    std::map<std::string, std::vector<VerificationVerdict>> rows;
    rows["a"] = verdict_row(1, 4);  // first attempt passes
    std::vector<VerificationVerdict> second{verdict(VerdictStatus::Fail),
                                            verdict(VerdictStatus::Pass)};
    rows["b"] = second;  // passes only on the second attempt
    const auto r = pass_at_k(rows, {}, k1);
    CHECK(r.overall.solved == 1);
  }
}

TEST_CASE("pass_at_k is monotone in k") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::map<std::string, std::vector<VerificationVerdict>> verdicts;
    const std::size_t theorems = 1 + bounded_u64(rng, 12);
    for (std::size_t t = 0; t < theorems; ++t) {
      std::vector<VerificationVerdict> row;
      for (int i = 0; i < 16; ++i) {
        row.push_back(verdict(bounded_u64(rng, 4) == 0 ? VerdictStatus::Pass
                                                       : VerdictStatus::Fail));
      }
      verdicts["t" + std::to_string(t)] = row;
    }
    std::size_t prev = 0;
    for (int k = 1; k <= 16; ++k) {
      EvalConfig cfg;
      cfg.k = k;
      const auto report = pass_at_k(verdicts, {}, cfg);
      CHECK(report.overall.solved >= prev);
      prev = report.overall.solved;
    }
  }
}

TEST_CASE("perplexity on the worked examples") {
  CHECK(perplexity(attempt_with_logprobs("p", {-1, -1, -1, -1, -1})) ==
        doctest::Approx(std::exp(1.0)).epsilon(1e-12));
  CHECK(perplexity(attempt_with_logprobs("p", {-std::log(2.0)})) ==
        doctest::Approx(2.0).epsilon(1e-12));
  CHECK(perplexity(attempt_with_logprobs("p", {-std::log(2.0), -std::log(8.0)})) ==
        doctest::Approx(4.0).epsilon(1e-12));
  CHECK_THROWS_AS(perplexity(ProofAttempt{}), std::invalid_argument);
  ProofAttempt empty;
  empty.token_logprobs = std::vector<TokenLogprob>{};
  CHECK_THROWS_AS(perplexity(empty), std::invalid_argument);
}

TEST_CASE("mean_perplexity averages and validates prompt ids") {
  const auto a = attempt_with_logprobs("p", {-1});          // PPL = e
  const auto b = attempt_with_logprobs("p", {-2});          // PPL = e^2
  CHECK(mean_perplexity("p", {a, b}) ==
        doctest::Approx((std::exp(1.0) + std::exp(2.0)) / 2).epsilon(1e-12));

  // K identical attempts: exactly the single value.
  std::vector<ProofAttempt> copies(16, a);
  CHECK(mean_perplexity("p", copies) == perplexity(a));

  auto wrong = attempt_with_logprobs("q", {-1});
  CHECK_THROWS_AS(mean_perplexity("p", {a, wrong}), std::invalid_argument);
  CHECK_THROWS_AS(mean_perplexity("p", {}), std::invalid_argument);
}

TEST_CASE("ppl_probe is deterministic under a fixed seed and stub endpoint") {
  std::vector<TheoremRecord> train, test;
  for (int i = 0; i < 8; ++i) {
    train.push_back(simple_record("train" + std::to_string(i)));
    test.push_back(simple_record("test" + std::to_string(i)));
  }

  MockChatBackend uniform([](const ProverEndpoint&, const std::string&, int n,
                             bool) {
    std::vector<ChatChoice> out;
    for (int i = 0; i < n; ++i) {
      ChatChoice c;
      c.text = "tok";
      c.finish_reason = "stop";
      c.logprobs = std::vector<TokenLogprob>(3, TokenLogprob{"t", -1.0});
      out.push_back(std::move(c));
    }
    return out;
  });

  ProverEndpoint ep;
  ep.name = "uniform";
  ep.base_url = "mock://unused";
  ep.supports_logprobs = true;

  EvalConfig cfg;
  cfg.n_ppl_samples = 4;
  cfg.ppl_sample_count_per_split = 3;
  cfg.sample_seed = 11;

  const auto r1 = ppl_probe(train, test, uniform, ep, cfg);
  const auto r2 = ppl_probe(train, test, uniform, ep, cfg);
  REQUIRE(r1.prompts.size() == r2.prompts.size());
  for (std::size_t i = 0; i < r1.prompts.size(); ++i) {
    CHECK(r1.prompts[i].prompt_id == r2.prompts[i].prompt_id);
    CHECK(r1.prompts[i].mean_ppl == r2.prompts[i].mean_ppl);
  }
  // A uniform model yields a constant perplexity across prompts.
  for (const auto& probe : r1.prompts) {
    CHECK(probe.mean_ppl == doctest::Approx(std::exp(1.0)));
  }
  CHECK(r1.split_counts.at("train") == 3);
  CHECK(r1.split_counts.at("test") == 3);

  SUBCASE("endpoint without logprob support is rejected") {
    ProverEndpoint no_lp = ep;
    no_lp.supports_logprobs = false;
    CHECK_THROWS_AS(ppl_probe(train, test, uniform, no_lp, cfg), ConfigError);
  }

  SUBCASE("no records is a configuration error") {
    CHECK_THROWS_AS(ppl_probe({}, {}, uniform, ep, cfg), ConfigError);
  }
}

TEST_CASE("percent rounding is half-up at one decimal") {
  CHECK(round_percent(167.0 / 244.0) == doctest::Approx(68.4));
  CHECK(round_percent(170.0 / 244.0) == doctest::Approx(69.7));
  CHECK(round_percent(25.0 / 45.0) == doctest::Approx(55.6));
  CHECK(round_percent(0.5555) == doctest::Approx(55.6));
  CHECK(format_count_rate(167, 244) == "167/244 = 68.4%");
  CHECK(format_count_rate(0, 0) == "0/0 = —");
}

TEST_CASE("render_report prints deltas against a baseline") {
  EvalReport current;
  current.overall = {"Overall", 364, 1000};
  current.categories = {{"Classical", 588, 1000}};
  EvalReport baseline;
  baseline.overall = {"Overall", 340, 1000};
  baseline.categories = {{"Classical", 549, 1000}};

  const std::string text =
      render_report(current, ReportFormat::TextTable, &baseline);
  CHECK(text.find("(+2.4%)") != std::string::npos);
  CHECK(text.find("(+3.9%)") != std::string::npos);

  // JSON and text agree on the numbers.
  const std::string json_text = render_report(current, ReportFormat::Json);
  const Json j = Json::parse(json_text);
  CHECK(j.at("overall").at("solved") == 364);
  CHECK(round_percent(j.at("overall").at("rate").get<double>()) ==
        doctest::Approx(36.4));

  // Round-trip behind the --baseline flag.
  const EvalReport reloaded = report_from_json(report_to_json(current));
  CHECK(reloaded.overall.solved == current.overall.solved);
  CHECK(reloaded.categories.size() == current.categories.size());
}

TEST_CASE("empty categories render as 0/0") {
  EvalReport report;
  report.overall = {"Overall", 0, 0};
  report.categories = {{"Empty", 0, 0}};
  const std::string text = render_report(report, ReportFormat::TextTable);
  CHECK(text.find("0/0 = —") != std::string::npos);
}
