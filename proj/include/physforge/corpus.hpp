#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "physforge/util/jsonl.hpp"

namespace physforge {

enum class Category { Classical, ParticleString, Relativity, QFT };
enum class Split { Train, Test, Unassigned };

std::string to_string(Category c);
std::string to_string(Split s);
Category category_from_string(std::string_view s);
Split split_from_string(std::string_view s);

/// One header/statement/proof triple mined from a Lean source tree, or
/// assembled from a verified conjecture.
struct TheoremRecord {
  std::string id;           // content hash of (header, statement, proof)
  std::string source_path;  // relative path of the originating .lean file
  std::string header;       // everything in the file preceding the declaration
  std::string statement;    // attributes + signature, proof excluded
  std::string proof;        // from the top-level ':=' to the declaration end
  std::optional<std::string> doc_comment;  // `/-- ... -/` block, when present
  Category category = Category::Classical;
  Split split = Split::Unassigned;
  std::size_t token_len = 0;

  bool operator==(const TheoremRecord&) const = default;
};

/// id is a pure function of the three content fields.
std::string record_content_id(std::string_view header, std::string_view statement,
                              std::string_view proof);

// ---------------------------------------------------------------------------
// Token estimation (pluggable; default counts maximal non-whitespace runs).

using TokenEstimator = std::function<std::size_t(std::string_view)>;

std::size_t whitespace_token_count(std::string_view text);
std::size_t chars4_token_count(std::string_view text);  // ceil(bytes / 4)

/// Known names: "whitespace", "chars4". Throws ConfigError otherwise.
TokenEstimator token_estimator_by_name(const std::string& name);

// ---------------------------------------------------------------------------
// Lexical declaration scanning.

/// One `lemma`/`theorem` declaration located in a file, before filtering.
struct LeanDeclaration {
  std::size_t region_begin = 0;  // byte offset where header ends
  std::string doc_comment;       // empty when absent
  std::string statement;
  std::string proof;             // empty when the declaration has no proof body
  std::string keyword;           // "lemma" or "theorem"
  bool parse_ok = true;
  std::string skip_reason;
};

/// Scans a Lean file for lemma/theorem declarations. A declaration starts at
/// a line whose first non-attribute code token is `lemma` or `theorem`; an
/// attribute block and doc comment immediately above belong to it. The proof
/// starts at the first bracket-depth-zero `:=` (or standalone `by`) and runs
/// to the next column-zero code line or end of file.
std::vector<LeanDeclaration> scan_lean_declarations(std::string_view text);

/// Marks each byte as code (true) or comment/string content (false).
/// Handles `--` line comments, nested `/- -/` blocks and string literals.
std::vector<bool> lean_code_mask(std::string_view text);

struct ExtractOptions {
  std::size_t max_tokens = 4096;
  TokenEstimator estimator;  // defaults to whitespace_token_count
  std::size_t workers = 1;
};

struct ExtractStats {
  std::size_t files_seen = 0;
  std::size_t files_unreadable = 0;
  std::size_t declarations_seen = 0;
  std::size_t skipped_no_proof = 0;
  std::size_t skipped_forbidden = 0;
  std::size_t skipped_too_long = 0;
  std::size_t skipped_unparseable = 0;
};

/// Walks `root` for .lean files and extracts one record per declaration that
/// has a proof body, carries no forbidden token and fits the token budget.
/// Records come back in deterministic (path, byte offset) order.
std::vector<TheoremRecord> extract_corpus(const std::filesystem::path& root,
                                          const ExtractOptions& opts,
                                          ExtractStats* stats = nullptr);

// ---------------------------------------------------------------------------
// Category assignment.

struct CategoryRule {
  std::string path_component;
  Category category;
};

/// QFT -> QFT, Relativity -> Relativity, Particles/StringTheory ->
/// ParticleString; anything unmatched falls back to Classical.
std::vector<CategoryRule> default_category_rules();

struct CategoryStats {
  std::size_t unmatched = 0;
};

void assign_categories(std::vector<TheoremRecord>& records,
                       const std::vector<CategoryRule>& rules,
                       CategoryStats* stats = nullptr);

// ---------------------------------------------------------------------------
// Train/test splitting.

struct SplitConfig {
  double ratio_train = 0.9;
  std::uint64_t rng_seed = 0;
  std::optional<std::pair<std::size_t, std::size_t>> exact_counts;
};

struct SplitResult {
  std::vector<TheoremRecord> train;
  std::vector<TheoremRecord> test;
  std::vector<TheoremRecord> unassigned;  // only with exact_counts truncation
};

/// Seeded shuffle then partition; identical inputs give byte-identical
/// outputs. Throws ConfigError for a ratio outside (0,1) or exact counts
/// exceeding the corpus size.
SplitResult split_corpus(std::vector<TheoremRecord> records,
                         const SplitConfig& cfg);

// ---------------------------------------------------------------------------
// JSONL serialization. Field order is fixed:
// id, source_path, header, statement, proof, doc_comment, category, split,
// token_len.

Json record_to_json(const TheoremRecord& r);
TheoremRecord record_from_json(const Json& j);

void save_corpus(const std::string& path,
                 const std::vector<TheoremRecord>& records);
std::vector<TheoremRecord> load_corpus(const std::string& path);

/// Declaration name, e.g. "sq" for "@[simp]\nlemma sq : ...". Empty when the
/// statement cannot be parsed.
std::string statement_decl_name(std::string_view statement);

}  // namespace physforge
