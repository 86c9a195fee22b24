#include "doctest.h"
#include "fixtures.hpp"
#include "physforge/conjectures.hpp"
#include "physforge/errors.hpp"

using namespace physforge;
using physforge::testing::TempDir;
using physforge::testing::simple_record;

namespace {

ProverEndpoint gen_endpoint() {
  ProverEndpoint ep;
  ep.name = "gen";
  ep.base_url = "mock://unused";
  ep.style = PromptStyle::ConjectureGen;
  return ep;
}

std::string conjecture_reply(int count, const std::string& stem) {
  Json reply;
  reply["conjectures"] = Json::array();
  for (int i = 0; i < count; ++i) {
    reply["conjectures"].push_back(
        Json{{"statement", "lemma " + stem + std::to_string(i) +
                               " : 1 + " + std::to_string(i) + " = " +
                               std::to_string(i) + " + 1"}});
  }
  return reply.dump();
}

VerifierConfig stub_with(StubTable table) {
  VerifierConfig cfg;
  cfg.backend = VerifierBackend::Stub;
  cfg.stub = std::make_shared<StubTable>(std::move(table));
  cfg.default_timeout = 5.0;
  return cfg;
}

SamplerOptions fast_retries() {
  SamplerOptions opts;
  opts.backoff_seconds = 0.0;
  return opts;
}

}  // namespace

TEST_CASE("parse_conjecture_reply tolerates prose and fences") {
  const std::string plain = conjecture_reply(3, "c");
  auto parsed = parse_conjecture_reply(plain);
  REQUIRE(parsed.has_value());
  CHECK(parsed->size() == 3);

  const std::string fenced =
      "Here you go:\n```json\n" + plain + "\n```\nenjoy";
  parsed = parse_conjecture_reply(fenced);
  REQUIRE(parsed.has_value());
  CHECK(parsed->size() == 3);

  const std::string embedded = "Sure! " + plain + " -- that is all.";
  parsed = parse_conjecture_reply(embedded);
  REQUIRE(parsed.has_value());
  CHECK(parsed->size() == 3);

  CHECK_FALSE(parse_conjecture_reply("no json here").has_value());
  CHECK_FALSE(parse_conjecture_reply("{\"wrong_key\": []}").has_value());
}

TEST_CASE("generate_conjectures normalizes statements and caps at k") {
  const TheoremRecord seed = simple_record("seed0");
  const auto backend = MockChatBackend::fixed(conjecture_reply(10, "conj"));
  const auto conjectures =
      generate_conjectures(*backend, gen_endpoint(), seed, 10, fast_retries());
  REQUIRE(conjectures.size() == 10);
  for (const auto& c : conjectures) {
    CHECK(c.parent_id == seed.id);
    CHECK(c.stage == ConjectureStage::Generated);
    CHECK(c.statement.substr(c.statement.size() - 8) == ":= sorry");
  }
  // Distinct ids even for near-identical statements.
  CHECK(conjectures[0].conjecture_id != conjectures[1].conjecture_id);

  // k caps a longer reply.
  const auto fewer =
      generate_conjectures(*backend, gen_endpoint(), seed, 4, fast_retries());
  CHECK(fewer.size() == 4);
}

TEST_CASE("generate_conjectures retries a malformed reply once") {
  const TheoremRecord seed = simple_record("seed1");
  int calls = 0;
  MockChatBackend flaky_format(
      [&calls](const ProverEndpoint&, const std::string&, int, bool) {
        ++calls;
        ChatChoice c;
        c.text = calls == 1 ? "garbage output" : conjecture_reply(2, "ok");
        c.finish_reason = "stop";
        return std::vector<ChatChoice>{c};
      });
  const auto conjectures = generate_conjectures(flaky_format, gen_endpoint(),
                                                seed, 10, fast_retries());
  CHECK(calls == 2);
  CHECK(conjectures.size() == 2);
}

TEST_CASE("generate_conjectures gives up after two malformed replies") {
  const TheoremRecord seed = simple_record("seed2");
  const auto backend = MockChatBackend::fixed("not json at all");
  const auto conjectures =
      generate_conjectures(*backend, gen_endpoint(), seed, 10, fast_retries());
  CHECK(conjectures.empty());
}

TEST_CASE("filter_syntax moves survivors and records rejections") {
  const TheoremRecord seed = simple_record("parent");
  const ParentIndex parents = build_parent_index({seed});

  std::vector<Conjecture> conjectures(3);
  for (int i = 0; i < 3; ++i) {
    conjectures[static_cast<std::size_t>(i)].conjecture_id = "c" + std::to_string(i);
    conjectures[static_cast<std::size_t>(i)].parent_id = seed.id;
  }
  conjectures[0].statement = "lemma good0 SYNOK : True := sorry";
  conjectures[1].statement = "lemma bad : frobulate = 1 := sorry";
  conjectures[2].statement = "lemma good2 SYNOK : 2 = 2 := sorry";

  StubTable table;
  table.rules.push_back({"statement", "SYNOK", VerdictStatus::Pass});
  const auto result = filter_syntax(conjectures, parents, stub_with(table));

  CHECK(result.delta.n_syntax_ok == 2);
  CHECK(result.rejected == 1);
  CHECK(result.conjectures[0].stage == ConjectureStage::SyntaxOk);
  CHECK(result.conjectures[1].stage == ConjectureStage::Rejected);
  CHECK(result.conjectures[1].rejection_reason.has_value());
  CHECK(result.conjectures[2].stage == ConjectureStage::SyntaxOk);

  SUBCASE("toolchain errors leave conjectures pending, not rejected") {
    StubTable boom;
    boom.default_status = VerdictStatus::ToolchainError;
    const auto pending = filter_syntax(conjectures, parents, stub_with(boom));
    CHECK(pending.pending_rerun == 3);
    CHECK(pending.delta.n_syntax_ok == 0);
    for (const auto& c : pending.conjectures) {
      CHECK(c.stage == ConjectureStage::Generated);
    }
  }

  SUBCASE("empty input changes nothing") {
    const auto empty = filter_syntax({}, parents, stub_with(StubTable{}));
    CHECK(empty.conjectures.empty());
    CHECK(empty.delta.n_syntax_ok == 0);
  }
}

TEST_CASE("filter_provable keeps conjectures with at least one verified proof") {
  const TheoremRecord seed = simple_record("parent");
  const ParentIndex parents = build_parent_index({seed});

  Conjecture provable;
  provable.conjecture_id = "c-provable";
  provable.parent_id = seed.id;
  provable.statement = "lemma winner PROVOK : True := sorry";
  provable.stage = ConjectureStage::SyntaxOk;

  Conjecture hopeless;
  hopeless.conjecture_id = "c-hopeless";
  hopeless.parent_id = seed.id;
  hopeless.statement = "lemma loser : False := sorry";
  hopeless.stage = ConjectureStage::SyntaxOk;

  StubTable table;
  table.rules.push_back({"statement", "PROVOK", VerdictStatus::Pass});

  ProverEndpoint ep = gen_endpoint();
  ep.style = PromptStyle::Deepseek;

  int backend_calls = 0;
  MockChatBackend counting(
      [&backend_calls](const ProverEndpoint&, const std::string&, int n, bool) {
        ++backend_calls;
        return std::vector<ChatChoice>(
            static_cast<std::size_t>(n),
            ChatChoice{"by trivial", "stop", std::nullopt});
      });

  const auto result =
      filter_provable({provable, hopeless}, {ep}, counting, 16, parents,
                      stub_with(table), fast_retries());

  CHECK(result.delta.n_provable == 1);
  CHECK(result.rejected == 1);
  REQUIRE(result.conjectures[0].stage == ConjectureStage::Provable);
  // Witness is the first passing attempt's proof.
  CHECK(result.conjectures[0].witness_proof == ":= by trivial");
  CHECK(result.conjectures[1].stage == ConjectureStage::Rejected);

  SUBCASE("multi-endpoint budgets follow configuration order") {
    ProverEndpoint ep2 = ep;
    ep2.name = "second";
    std::vector<int> ns_seen;
    MockChatBackend recording(
        [&ns_seen](const ProverEndpoint&, const std::string&, int n, bool) {
          ns_seen.push_back(n);
          return std::vector<ChatChoice>(
              static_cast<std::size_t>(n),
              ChatChoice{"by trivial", "stop", std::nullopt});
        });
    StubTable never;
    (void)filter_provable({hopeless}, {ep, ep2, ep2}, recording, 16, parents,
                          stub_with(never), fast_retries());
    CHECK(ns_seen == std::vector<int>{6, 5, 5});
  }

  SUBCASE("all transport failures leave a conjecture pending") {
    MockChatBackend down([](const ProverEndpoint&, const std::string&, int,
                            bool) -> std::vector<ChatChoice> {
      throw TransportError("down");
    });
    const auto pending = filter_provable({provable}, {ep}, down, 4, parents,
                                         stub_with(table), fast_retries());
    CHECK(pending.pending_rerun == 1);
    CHECK(pending.conjectures[0].stage == ConjectureStage::SyntaxOk);
  }
}

TEST_CASE("routing backend serves each endpoint its own mock fixture") {
  TempDir dir("routing");
  const std::string mock_a = dir.file("a.json");
  const std::string mock_b = dir.file("b.json");
  write_file(mock_a, R"({"choices": [{"text": "by tactic_alpha"}]})");
  write_file(mock_b, R"({"choices": [{"text": "by tactic_beta"}]})");

  ProverEndpoint ep_a, ep_b;
  ep_a.name = "alpha";
  ep_a.base_url = "mock://" + mock_a;
  ep_b.name = "beta";
  ep_b.base_url = "mock://" + mock_b;

  const auto routing = make_routing_backend();
  const TheoremRecord seed = simple_record("routed");
  const auto a = sample_proofs(*routing, ep_a, seed, 2);
  const auto b = sample_proofs(*routing, ep_b, seed, 2);
  CHECK(a[0].completion == "by tactic_alpha");
  CHECK(b[0].completion == "by tactic_beta");
}

TEST_CASE("early stop: verification halts at the first pass") {
  const TheoremRecord seed = simple_record("parent");
  const ParentIndex parents = build_parent_index({seed});

  Conjecture c;
  c.conjecture_id = "c0";
  c.parent_id = seed.id;
  c.statement = "lemma anything : True := sorry";
  c.stage = ConjectureStage::SyntaxOk;

  // Every attempt passes, so only the first should ever reach the verifier.
  StubTable table;
  table.default_status = VerdictStatus::Pass;

  ProverEndpoint ep = gen_endpoint();
  ep.style = PromptStyle::Deepseek;
  // Distinct completions per attempt so each verification would leave its
  // own cache entry.
  MockChatBackend distinct(
      [](const ProverEndpoint&, const std::string&, int n, bool) {
        std::vector<ChatChoice> out;
        for (int i = 0; i < n; ++i) {
          out.push_back(ChatChoice{
              "by trivial_variant_" + std::to_string(i), "stop", std::nullopt});
        }
        return out;
      });
  TempDir dir("earlystop");
  VerifierConfig vcfg = stub_with(table);
  vcfg.cache_dir = dir.file("cache");

  const auto result = filter_provable({c}, {ep}, distinct, 16, parents, vcfg,
                                      fast_retries());
  CHECK(result.delta.n_provable == 1);
  CHECK(result.conjectures[0].witness_proof == ":= by trivial_variant_0");
  std::size_t cached = 0;
  for ([[maybe_unused]] const auto& e :
       std::filesystem::directory_iterator(*vcfg.cache_dir)) {
    ++cached;
  }
  CHECK(cached == 1);  // one verification, despite a budget of 16
}

TEST_CASE("assemble_training_set merges, inherits, and dedups") {
  TheoremRecord seed = simple_record("seed");
  seed.category = Category::QFT;
  seed.split = Split::Train;
  const ParentIndex parents = build_parent_index({seed});

  auto make_provable = [&](const std::string& stmt, const std::string& witness) {
    Conjecture c;
    c.conjecture_id = "c-" + stmt;
    c.parent_id = seed.id;
    c.statement = stmt;
    c.stage = ConjectureStage::Provable;
    c.witness_proof = witness;
    return c;
  };

  SUBCASE("plain merge") {
    const auto result = assemble_training_set(
        {seed},
        {make_provable("lemma v1 : 1 = 1 := sorry", ":= by rfl"),
         make_provable("lemma v2 : 2 = 2 := sorry", ":= by rfl")},
        parents);
    REQUIRE(result.records.size() == 3);
    CHECK(result.duplicates_removed == 0);
    CHECK(result.records[1].category == Category::QFT);
    CHECK(result.records[1].split == Split::Train);
    CHECK(result.records[1].header == seed.header);
    CHECK(result.records[1].statement == "lemma v1 : 1 = 1");
    CHECK(result.records[1].proof == ":= by rfl");
  }

  SUBCASE("conjecture identical to its seed is dropped") {
    const auto result = assemble_training_set(
        {seed},
        {make_provable(seed.statement + " := sorry", ":= by norm_num")},
        parents);
    CHECK(result.records.size() == 1);
    CHECK(result.duplicates_removed == 1);
  }

  SUBCASE("duplicate conjectures collapse to one") {
    const auto result = assemble_training_set(
        {seed},
        {make_provable("lemma d :  1 = 1 := sorry", ":= by rfl"),
         make_provable("lemma d : 1 = 1 := sorry", ":= by simp")},
        parents);
    CHECK(result.records.size() == 2);
    CHECK(result.duplicates_removed == 1);
    CHECK(result.conjectures_pre_dedup == 2);
  }

  SUBCASE("empty conjecture list returns the seeds") {
    const auto result = assemble_training_set({seed}, {}, parents);
    CHECK(result.records.size() == 1);
  }
}

TEST_CASE("ledger arithmetic and rendering") {
  PipelineLedger ledger;
  ledger.n_seeds = 2933;
  ledger.n_generated = 29330;
  ledger.n_syntax_ok = 6971;
  ledger.n_provable = 2608;
  CHECK(ledger.retention_syntax() == doctest::Approx(6971.0 / 29330.0));
  CHECK(ledger.yield_overall() == doctest::Approx(2608.0 / 29330.0));
  const std::string text = ledger.render_text();
  CHECK(text.find("23.8%") != std::string::npos);
  CHECK(text.find("8.9%") != std::string::npos);

  PipelineLedger sum;
  sum += ledger;
  sum += ledger;
  CHECK(sum.n_generated == 2 * ledger.n_generated);
  CHECK(sum.n_provable <= sum.n_syntax_ok);
  CHECK(sum.n_syntax_ok <= sum.n_generated);
}

TEST_CASE("conjecture jsonl round-trip") {
  TempDir dir("conj");
  Conjecture c;
  c.conjecture_id = "cid";
  c.parent_id = "pid";
  c.statement = "lemma x : 1 = 1 := sorry";
  c.stage = ConjectureStage::Provable;
  c.witness_proof = ":= by rfl";

  const std::string path = dir.file("c.jsonl");
  save_conjectures(path, {c});
  const auto loaded = load_conjectures(path);
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0].conjecture_id == c.conjecture_id);
  CHECK(loaded[0].stage == ConjectureStage::Provable);
  CHECK(loaded[0].witness_proof == c.witness_proof);
  CHECK_FALSE(loaded[0].rejection_reason.has_value());
}

TEST_CASE("normalize_statement collapses whitespace and placeholders") {
  CHECK(normalize_statement("lemma  a :\n  1 = 1 := sorry") ==
        "lemma a : 1 = 1");
  CHECK(normalize_statement("lemma a : 1 = 1") == "lemma a : 1 = 1");
}
