#include <atomic>

#include "doctest.h"
#include "fixtures.hpp"
#include "physforge/errors.hpp"
#include "physforge/verifier.hpp"

using namespace physforge;
using physforge::testing::TempDir;

namespace {

VerifierConfig stub_config(StubTable table) {
  VerifierConfig cfg;
  cfg.backend = VerifierBackend::Stub;
  cfg.stub = std::make_shared<StubTable>(std::move(table));
  cfg.default_timeout = 5.0;
  return cfg;
}

StubTable pass_marker_table() {
  StubTable table;
  table.rules.push_back({"proof", "PASS_ME", VerdictStatus::Pass});
  table.rules.push_back({"proof", "TIME_ME", VerdictStatus::Timeout});
  table.default_status = VerdictStatus::Fail;
  return table;
}

VerificationJob job_with(const std::string& proof) {
  VerificationJob job;
  job.job_id = "j1";
  job.header = "import Mathlib";
  job.statement = "theorem t : 1 + 1 = 2";
  job.proof_candidate = proof;
  job.timeout_seconds = 5.0;
  return job;
}

}  // namespace

TEST_CASE("scan_forbidden matches standalone keywords only") {
  CHECK(scan_forbidden("by\n  sorry") == "sorry");
  CHECK(scan_forbidden("by admit") == "admit");
  CHECK(scan_forbidden("simp [h]; apply? ") == "apply?");
  CHECK_FALSE(scan_forbidden("-- sorry\nexact rfl").has_value());
  CHECK_FALSE(scan_forbidden("/- admit -/ exact rfl").has_value());
  CHECK_FALSE(scan_forbidden("/- outer /- sorry -/ still comment -/ rfl").has_value());
  CHECK_FALSE(scan_forbidden("exact sorry_free_lemma").has_value());
  CHECK_FALSE(scan_forbidden("exact admitted").has_value());
  CHECK_FALSE(scan_forbidden("exact my_sorry").has_value());
  CHECK_FALSE(scan_forbidden("exact \"sorry\"").has_value());
  // First by position, not by keyword priority.
  CHECK(scan_forbidden(":= by admit; sorry") == "admit");
  CHECK(scan_forbidden("").has_value() == false);
}

TEST_CASE("strip_comments_and_strings keeps boundaries") {
  const std::string stripped =
      strip_comments_and_strings("a-- tail\nb /- mid -/ c \"str\" d");
  CHECK(stripped.find("tail") == std::string::npos);
  CHECK(stripped.find("mid") == std::string::npos);
  CHECK(stripped.find("str") == std::string::npos);
  CHECK(stripped.find('a') != std::string::npos);
  CHECK(stripped.find('b') != std::string::npos);
  CHECK(stripped.find('c') != std::string::npos);
  CHECK(stripped.find('d') != std::string::npos);
}

TEST_CASE("placeholder helpers") {
  CHECK(strip_sorry_suffix("lemma x : T := sorry") == "lemma x : T");
  CHECK(strip_sorry_suffix("lemma x : T :=\n  sorry") == "lemma x : T");
  CHECK(strip_sorry_suffix("lemma x : T := ") == "lemma x : T");
  CHECK(strip_sorry_suffix("lemma x : T") == "lemma x : T");
  CHECK(append_sorry_placeholder("lemma x : T") == "lemma x : T := sorry");
  CHECK(append_sorry_placeholder("lemma x : T := sorry") ==
        "lemma x : T := sorry");
}

TEST_CASE("verify on the stub backend") {
  const VerifierConfig cfg = stub_config(pass_marker_table());

  SUBCASE("pass and fail rules") {
    CHECK(verify(job_with(":= by norm_num PASS_ME"), cfg).status ==
          VerdictStatus::Pass);
    const auto fail = verify(job_with(":= by rfl"), cfg);
    CHECK(fail.status == VerdictStatus::Fail);
    CHECK_FALSE(fail.diagnostics.empty());
  }

  SUBCASE("forbidden keywords short-circuit before the backend") {
    // The marker would pass, but the scanner fires first.
    const auto verdict = verify(job_with(":= by admit PASS_ME"), cfg);
    CHECK(verdict.status == VerdictStatus::ForbiddenKeyword);
    CHECK(verdict.diagnostics.find("admit") != std::string::npos);
  }

  SUBCASE("preconditions") {
    VerificationJob empty_stmt = job_with(":= rfl");
    empty_stmt.statement = "  ";
    CHECK_THROWS_AS(verify(empty_stmt, cfg), std::invalid_argument);
    VerificationJob bad_timeout = job_with(":= rfl");
    bad_timeout.timeout_seconds = 0;
    CHECK_THROWS_AS(verify(bad_timeout, cfg), std::invalid_argument);
  }

  SUBCASE("stub verdicts are a pure function of the job content") {
    const auto a = verify(job_with(":= by simp PASS_ME"), cfg);
    const auto b = verify(job_with(":= by simp PASS_ME"), cfg);
    CHECK(a.status == b.status);
  }
}

TEST_CASE("check_statement_syntax uses a sorry placeholder") {
  StubTable table;
  // The syntax probe always verifies with ':= sorry' as the proof.
  table.rules.push_back({"proof", ":= sorry", VerdictStatus::Pass});
  const VerifierConfig cfg = stub_config(std::move(table));

  CHECK(check_statement_syntax("import Mathlib", "theorem t : 1 + 1 = 2", cfg)
            .status == VerdictStatus::Pass);
  // A statement that already carries a placeholder is normalized first.
  CHECK(check_statement_syntax("import Mathlib",
                               "theorem t : 1 + 1 = 2 := sorry", cfg)
            .status == VerdictStatus::Pass);
  CHECK_THROWS_AS(check_statement_syntax("h", "", cfg), std::invalid_argument);
}

TEST_CASE("verify_batch is order-aligned, isolated, and parallel-invariant") {
  const VerifierConfig base = stub_config(pass_marker_table());

  SUBCASE("empty batch") {
    CHECK(verify_batch({}, base).empty());
  }

  std::vector<VerificationJob> jobs;
  for (int i = 0; i < 12; ++i) {
    VerificationJob job = job_with(i % 3 == 0 ? ":= by simp PASS_ME"
                                   : i % 3 == 1 ? ":= by rfl"
                                                : ":= wait TIME_ME");
    job.job_id = "job" + std::to_string(i);
    jobs.push_back(std::move(job));
  }

  VerifierConfig serial = base;
  serial.max_parallel = 1;
  VerifierConfig wide = base;
  wide.max_parallel = 8;

  const auto a = verify_batch(jobs, serial);
  const auto b = verify_batch(jobs, wide);
  REQUIRE(a.size() == jobs.size());
  REQUIRE(b.size() == jobs.size());
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    CHECK(a[i].job_id == jobs[i].job_id);
    CHECK(a[i].status == b[i].status);
  }
  // One timed-out job does not contaminate its neighbors.
  CHECK(a[2].status == VerdictStatus::Timeout);
  CHECK(a[3].status == VerdictStatus::Pass);
}

TEST_CASE("verdict cache returns identical results without re-running") {
  TempDir dir("cache");

  // Counting backend: a stub table consulted through a wrapper would hide
  // invocation counts, so run twice against a cache dir and compare.
  VerifierConfig cfg = stub_config(pass_marker_table());
  cfg.cache_dir = dir.file("cache");

  const auto first = verify(job_with(":= by simp PASS_ME cache_case"), cfg);
  const auto second = verify(job_with(":= by simp PASS_ME cache_case"), cfg);
  CHECK(first.status == second.status);
  CHECK(first.status == VerdictStatus::Pass);

  // The cached entry survives on disk under the content hash.
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& e :
       std::filesystem::directory_iterator(*cfg.cache_dir)) {
    ++entries;
  }
  CHECK(entries >= 1);
}

TEST_CASE("transient verdicts are not cached") {
  TempDir dir("cache_transient");
  VerifierConfig cfg = stub_config(pass_marker_table());
  cfg.cache_dir = dir.file("cache");

  (void)verify(job_with(":= wait TIME_ME transient"), cfg);
  std::size_t entries = 0;
  if (std::filesystem::exists(*cfg.cache_dir)) {
    for ([[maybe_unused]] const auto& e :
         std::filesystem::directory_iterator(*cfg.cache_dir)) {
      ++entries;
    }
  }
  CHECK(entries == 0);
}

TEST_CASE("toolchain backend classifies compiler outcomes") {
  TempDir project("fake_project");

  // Stand-in for `lake env lean <file>`: the verdict depends on markers in
  // the composed scratch file.
  const std::string script = project.file("fake_lean.sh");
  write_file(script,
             "#!/bin/sh\n"
             "content=\"$(cat \"$1\")\"\n"
             "case \"$content\" in\n"
             "  *GOODPROOF*) exit 0 ;;\n"
             "  *WARNPROOF*) echo \"$1:1:0: warning: declaration uses "
             "'sorry'\"; exit 0 ;;\n"
             "  *':= sorry'*) echo \"$1:1:0: warning: declaration uses "
             "'sorry'\"; exit 0 ;;\n"
             "  *HANGPROOF*) sleep 30; exit 0 ;;\n"
             "  *) echo \"$1:3:10: error: unknown identifier 'frobulate'\"; "
             "exit 1 ;;\n"
             "esac\n");
  std::filesystem::permissions(script,
                               std::filesystem::perms::owner_all |
                                   std::filesystem::perms::group_read |
                                   std::filesystem::perms::others_read);

  VerifierConfig cfg;
  cfg.backend = VerifierBackend::LeanToolchain;
  cfg.project_dir = project.path().string();
  cfg.compile_command = {script};
  cfg.default_timeout = 5.0;

  auto job_for = [](const std::string& proof) {
    VerificationJob job;
    job.job_id = "fake";
    job.header = "import Mathlib";
    job.statement = "theorem t : 1 + 1 = 2";
    job.proof_candidate = proof;
    job.timeout_seconds = 5.0;
    return job;
  };

  SUBCASE("clean compile passes and removes the scratch file") {
    const auto verdict = verify(job_for(":= by GOODPROOF"), cfg);
    CHECK(verdict.status == VerdictStatus::Pass);
    CHECK(std::filesystem::is_empty(project.path() / ".physforge_scratch"));
  }

  SUBCASE("compiler errors fail with diagnostics and keep the scratch file") {
    const auto verdict = verify(job_for(":= by broken_tactic"), cfg);
    CHECK(verdict.status == VerdictStatus::Fail);
    CHECK(verdict.diagnostics.find("error: unknown identifier") !=
          std::string::npos);
    CHECK_FALSE(
        std::filesystem::is_empty(project.path() / ".physforge_scratch"));
  }

  SUBCASE("a sorry-axiom warning blocks verify but not the syntax check") {
    // WARNPROOF elaborates with a sorry-axiom warning.
    const auto verdict = verify(job_for(":= by WARNPROOF"), cfg);
    CHECK(verdict.status == VerdictStatus::Fail);
    // The syntax probe composes ':= sorry' itself and whitelists the warning.
    const auto syntax =
        check_statement_syntax("import Mathlib", "theorem t : 1 + 1 = 2", cfg);
    CHECK(syntax.status == VerdictStatus::Pass);
  }

  SUBCASE("wall-clock timeouts kill the process") {
    VerificationJob hang = job_for(":= by HANGPROOF");
    hang.timeout_seconds = 0.3;
    const auto verdict = verify(hang, cfg);
    CHECK(verdict.status == VerdictStatus::Timeout);
    CHECK(verdict.wall_time < 5.0);
  }
}

TEST_CASE("missing toolchain yields ToolchainError, not a crash") {
  VerifierConfig cfg;
  cfg.backend = VerifierBackend::LeanToolchain;
  cfg.project_dir = "/nonexistent/project";
  cfg.default_timeout = 5.0;
  const auto verdict = verify(job_with(":= by rfl"), cfg);
  CHECK(verdict.status == VerdictStatus::ToolchainError);
}

TEST_CASE("job id helpers") {
  CHECK(make_job_id("abc", 7) == "abc#7");
  const auto [id, index] = parse_job_id("abc#7");
  CHECK(id == "abc");
  CHECK(index == 7);
}

TEST_CASE("stub table serialization round-trip") {
  const StubTable table = pass_marker_table();
  const StubTable loaded = StubTable::from_json(table.to_json());
  CHECK(loaded.rules.size() == table.rules.size());
  CHECK(loaded.default_status == table.default_status);
  CHECK(loaded.lookup("h", "s", "x PASS_ME") == VerdictStatus::Pass);
  CHECK(loaded.lookup("h", "s", "x") == VerdictStatus::Fail);
}
