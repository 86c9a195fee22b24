#include "physforge/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "physforge/errors.hpp"
#include "physforge/log.hpp"
#include "physforge/util/hash.hpp"
#include "physforge/util/rng.hpp"
#include "physforge/util/strings.hpp"
#include "physforge/util/worker_pool.hpp"
#include "physforge/verifier.hpp"

namespace physforge {

std::string to_string(Category c) {
  switch (c) {
    case Category::Classical: return "Classical";
    case Category::ParticleString: return "ParticleString";
    case Category::Relativity: return "Relativity";
    case Category::QFT: return "QFT";
  }
  return "Classical";
}

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Test: return "test";
    case Split::Unassigned: return "unassigned";
  }
  return "unassigned";
}

Category category_from_string(std::string_view s) {
  if (s == "Classical") return Category::Classical;
  if (s == "ParticleString") return Category::ParticleString;
  if (s == "Relativity") return Category::Relativity;
  if (s == "QFT") return Category::QFT;
  throw ConfigError("unknown category: " + std::string(s));
}

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  if (s == "unassigned") return Split::Unassigned;
  throw ConfigError("unknown split: " + std::string(s));
}

std::string record_content_id(std::string_view header, std::string_view statement,
                              std::string_view proof) {
  Sha256 h;
  h.update(header);
  h.update("\x1f", 1);
  h.update(statement);
  h.update("\x1f", 1);
  h.update(proof);
  const auto d = h.digest();
  static const char* kHex = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (std::uint8_t b : d) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xf]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Token estimation.

std::size_t whitespace_token_count(std::string_view text) {
  std::size_t count = 0;
  bool in_token = false;
  for (char c : text) {
    const bool ws = c == ' ' || c == '\t' || c == '\n' || c == '\r' ||
                    c == '\f' || c == '\v';
    if (!ws && !in_token) ++count;
    in_token = !ws;
  }
  return count;
}

std::size_t chars4_token_count(std::string_view text) {
  return (text.size() + 3) / 4;
}

TokenEstimator token_estimator_by_name(const std::string& name) {
  if (name == "whitespace") return whitespace_token_count;
  if (name == "chars4") return chars4_token_count;
  throw ConfigError("unknown token estimator: " + name);
}

// ---------------------------------------------------------------------------
// Lexical scanning.

namespace {

struct CommentSpan {
  std::size_t begin = 0;
  std::size_t end = 0;  // one past the closing "-/"
  bool is_doc = false;
};

struct LexInfo {
  std::vector<bool> mask;
  std::vector<CommentSpan> block_comments;
};

LexInfo lex(std::string_view text) {
  LexInfo info;
  info.mask.assign(text.size(), true);
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '-' && i + 1 < text.size() && text[i + 1] == '-') {
      while (i < text.size() && text[i] != '\n') info.mask[i++] = false;
      continue;
    }
    if (c == '/' && i + 1 < text.size() && text[i + 1] == '-') {
      CommentSpan span;
      span.begin = i;
      span.is_doc = i + 2 < text.size() && text[i + 2] == '-';
      int depth = 0;
      while (i < text.size()) {
        if (text[i] == '/' && i + 1 < text.size() && text[i + 1] == '-') {
          info.mask[i] = info.mask[i + 1] = false;
          i += 2;
          ++depth;
          continue;
        }
        if (text[i] == '-' && i + 1 < text.size() && text[i + 1] == '/') {
          info.mask[i] = info.mask[i + 1] = false;
          i += 2;
          if (--depth == 0) break;
          continue;
        }
        info.mask[i++] = false;
      }
      span.end = i;
      info.block_comments.push_back(span);
      continue;
    }
    if (c == '"') {
      info.mask[i++] = false;
      while (i < text.size()) {
        if (text[i] == '\\' && i + 1 < text.size()) {
          info.mask[i] = info.mask[i + 1] = false;
          i += 2;
          continue;
        }
        const bool closing = text[i] == '"';
        info.mask[i++] = false;
        if (closing) break;
      }
      continue;
    }
    ++i;
  }
  return info;
}

inline bool is_ident_char(unsigned char c) {
  return std::isalnum(c) || c == '_' || c == '\'' || c == '!' || c == '?' ||
         c >= 0x80;
}

inline bool is_line_ws(char c) { return c == ' ' || c == '\t' || c == '\r'; }

// Matches `word` at position p with identifier boundaries on both sides.
bool word_at(std::string_view text, std::size_t p, std::string_view word) {
  if (p + word.size() > text.size()) return false;
  if (text.substr(p, word.size()) != word) return false;
  if (p > 0 && is_ident_char(static_cast<unsigned char>(text[p - 1]))) {
    return false;
  }
  const std::size_t after = p + word.size();
  if (after < text.size() &&
      is_ident_char(static_cast<unsigned char>(text[after]))) {
    return false;
  }
  return true;
}

// Skips an `@[...]` attribute group starting at p; returns one past the
// closing bracket, or p when no group starts here.
std::size_t skip_attribute_group(std::string_view text,
                                 const std::vector<bool>& mask,
                                 std::size_t p) {
  if (p + 1 >= text.size() || text[p] != '@' || text[p + 1] != '[') return p;
  std::size_t i = p + 2;
  int depth = 1;
  while (i < text.size() && depth > 0) {
    if (mask[i]) {
      if (text[i] == '[') ++depth;
      if (text[i] == ']') --depth;
    }
    ++i;
  }
  return i;
}

// Bracket depth step over one byte (assumed code); handles the common Lean
// unicode brackets as 3-byte UTF-8 sequences.
int depth_delta(std::string_view text, std::size_t i, std::size_t* advance) {
  *advance = 1;
  const char c = text[i];
  if (c == '(' || c == '[' || c == '{') return 1;
  if (c == ')' || c == ']' || c == '}') return -1;
  if (static_cast<unsigned char>(c) == 0xE2 && i + 2 < text.size()) {
    const auto b1 = static_cast<unsigned char>(text[i + 1]);
    const auto b2 = static_cast<unsigned char>(text[i + 2]);
    if (b1 == 0x9F && b2 == 0xA8) { *advance = 3; return 1; }   // ⟨
    if (b1 == 0x9F && b2 == 0xA9) { *advance = 3; return -1; }  // ⟩
    if (b1 == 0xA6 && b2 == 0x83) { *advance = 3; return 1; }   // ⦃
    if (b1 == 0xA6 && b2 == 0x84) { *advance = 3; return -1; }  // ⦄
  }
  return 0;
}

}  // namespace

std::vector<bool> lean_code_mask(std::string_view text) {
  return lex(text).mask;
}

std::vector<LeanDeclaration> scan_lean_declarations(std::string_view text) {
  const LexInfo info = lex(text);
  const auto& mask = info.mask;

  // Line table.
  std::vector<std::size_t> line_starts;
  line_starts.push_back(0);
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\n' && i + 1 <= text.size()) line_starts.push_back(i + 1);
  }
  auto line_end = [&](std::size_t li) {
    return li + 1 < line_starts.size() ? line_starts[li + 1] - 1 : text.size();
  };

  std::vector<LeanDeclaration> decls;
  std::size_t li = 0;
  while (li < line_starts.size()) {
    const std::size_t ls = line_starts[li];
    const std::size_t le = line_end(li);

    // First code token of the line, with inline attribute groups skipped.
    std::size_t p = ls;
    while (p < le && (is_line_ws(text[p]) || !mask[p])) ++p;
    while (p < le && text[p] == '@') {
      const std::size_t after = skip_attribute_group(text, mask, p);
      if (after == p) break;
      p = after;
      while (p < le && (is_line_ws(text[p]) || !mask[p])) ++p;
    }

    std::string keyword;
    if (p < le && mask[p]) {
      if (word_at(text, p, "lemma")) keyword = "lemma";
      else if (word_at(text, p, "theorem")) keyword = "theorem";
    }
    if (keyword.empty()) {
      ++li;
      continue;
    }

    // Pull in attribute-only lines directly above.
    std::size_t stmt_line = li;
    while (stmt_line > 0) {
      const std::size_t pls = line_starts[stmt_line - 1];
      const std::size_t ple = line_end(stmt_line - 1);
      std::string_view prev = trim(text.substr(pls, ple - pls));
      if (prev.size() >= 2 && prev.substr(0, 2) == "@[") {
        --stmt_line;
        continue;
      }
      break;
    }
    const std::size_t stmt_start = line_starts[stmt_line];

    // Doc comment immediately above (whitespace in between allowed).
    std::size_t region_begin = stmt_start;
    std::string doc_comment;
    {
      std::size_t q = stmt_start;
      while (q > 0 && std::isspace(static_cast<unsigned char>(text[q - 1]))) {
        --q;
      }
      for (const CommentSpan& span : info.block_comments) {
        if (span.end == q && span.is_doc) {
          doc_comment = std::string(text.substr(span.begin, span.end - span.begin));
          region_begin = span.begin;
          break;
        }
        if (span.begin >= q) break;
      }
    }

    // Declaration end: next column-zero code (or comment-opening) line.
    std::size_t end_line = li + 1;
    while (end_line < line_starts.size()) {
      const std::size_t els = line_starts[end_line];
      const std::size_t ele = line_end(end_line);
      if (els < ele && !is_line_ws(text[els]) && text[els] != '\n') {
        if (mask[els]) break;
        if (text[els] == '/' && els + 1 < ele && text[els + 1] == '-') break;
      }
      ++end_line;
    }
    const std::size_t decl_end =
        end_line < line_starts.size() ? line_starts[end_line] : text.size();

    // Proof delimiter: first depth-zero `:=` (or standalone `by`) after the
    // keyword.
    std::size_t proof_start = std::string_view::npos;
    {
      int depth = 0;
      std::size_t i = p + keyword.size();
      while (i < decl_end) {
        if (!mask[i]) {
          ++i;
          continue;
        }
        std::size_t advance = 1;
        const int d = depth_delta(text, i, &advance);
        if (d != 0) {
          depth += d;
          i += advance;
          continue;
        }
        if (depth == 0) {
          if (text[i] == ':' && i + 1 < decl_end && text[i + 1] == '=' &&
              mask[i + 1]) {
            proof_start = i;
            break;
          }
          if (text[i] == 'b' && word_at(text, i, "by")) {
            proof_start = i;
            break;
          }
        }
        ++i;
      }
    }

    LeanDeclaration decl;
    decl.region_begin = region_begin;
    decl.doc_comment = doc_comment;
    decl.keyword = keyword;
    if (proof_start == std::string_view::npos) {
      decl.parse_ok = false;
      decl.skip_reason = "no proof delimiter (`:=` or `by`) found";
      decl.statement =
          std::string(rtrim(text.substr(stmt_start, decl_end - stmt_start)));
    } else {
      decl.statement =
          std::string(rtrim(text.substr(stmt_start, proof_start - stmt_start)));
      decl.proof =
          std::string(rtrim(text.substr(proof_start, decl_end - proof_start)));
    }
    decls.push_back(std::move(decl));

    li = end_line;
  }
  return decls;
}

// ---------------------------------------------------------------------------
// Extraction.

namespace {

struct FileExtraction {
  std::vector<TheoremRecord> records;
  ExtractStats stats;
};

FileExtraction extract_file(const std::filesystem::path& file,
                            const std::string& rel_path,
                            const ExtractOptions& opts) {
  FileExtraction out;
  out.stats.files_seen = 1;

  std::string text;
  try {
    text = read_file(file.string());
  } catch (const std::exception& e) {
    log_warn("skipping unreadable file " + rel_path + ": " + e.what());
    out.stats.files_unreadable = 1;
    return out;
  }

  const TokenEstimator& estimate =
      opts.estimator ? opts.estimator : TokenEstimator(whitespace_token_count);

  for (const LeanDeclaration& decl : scan_lean_declarations(text)) {
    ++out.stats.declarations_seen;
    if (!decl.parse_ok) {
      log_warn(rel_path + ": skipped declaration: " + decl.skip_reason);
      ++out.stats.skipped_unparseable;
      continue;
    }
    std::string proof_body(trim(std::string_view(decl.proof)));
    if (proof_body == ":=" || proof_body.empty()) {
      ++out.stats.skipped_no_proof;
      continue;
    }
    if (scan_forbidden(decl.proof).has_value()) {
      ++out.stats.skipped_forbidden;
      continue;
    }

    TheoremRecord rec;
    rec.source_path = rel_path;
    rec.header = std::string(rtrim(text.substr(0, decl.region_begin)));
    rec.statement = decl.statement;
    rec.proof = decl.proof;
    if (!decl.doc_comment.empty()) rec.doc_comment = decl.doc_comment;
    rec.token_len =
        estimate(rec.header + "\n" + rec.statement + "\n" + rec.proof);
    if (rec.token_len >= opts.max_tokens) {
      ++out.stats.skipped_too_long;
      continue;
    }
    rec.id = record_content_id(rec.header, rec.statement, rec.proof);
    out.records.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

std::vector<TheoremRecord> extract_corpus(const std::filesystem::path& root,
                                          const ExtractOptions& opts,
                                          ExtractStats* stats) {
  namespace fs = std::filesystem;
  if (!fs::exists(root) || !fs::is_directory(root)) {
    throw ConfigError("corpus root is not a directory: " + root.string());
  }

  std::vector<std::pair<std::string, fs::path>> files;  // (rel path, full)
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().extension() != ".lean") continue;
    files.emplace_back(fs::relative(entry.path(), root).generic_string(),
                       entry.path());
  }
  std::sort(files.begin(), files.end());

  const auto per_file = parallel_map(
      files, std::max<std::size_t>(opts.workers, 1),
      [&](const std::pair<std::string, fs::path>& f) {
        return extract_file(f.second, f.first, opts);
      });

  std::vector<TheoremRecord> records;
  ExtractStats total;
  for (const FileExtraction& fe : per_file) {
    records.insert(records.end(), fe.records.begin(), fe.records.end());
    total.files_seen += fe.stats.files_seen;
    total.files_unreadable += fe.stats.files_unreadable;
    total.declarations_seen += fe.stats.declarations_seen;
    total.skipped_no_proof += fe.stats.skipped_no_proof;
    total.skipped_forbidden += fe.stats.skipped_forbidden;
    total.skipped_too_long += fe.stats.skipped_too_long;
    total.skipped_unparseable += fe.stats.skipped_unparseable;
  }
  if (stats) *stats = total;
  return records;
}

// ---------------------------------------------------------------------------
// Categories.

std::vector<CategoryRule> default_category_rules() {
  return {
      {"QFT", Category::QFT},
      {"Relativity", Category::Relativity},
      {"Particles", Category::ParticleString},
      {"StringTheory", Category::ParticleString},
  };
}

namespace {

bool path_has_component(std::string_view path, std::string_view component) {
  std::size_t start = 0;
  while (start <= path.size()) {
    std::size_t slash = path.find('/', start);
    if (slash == std::string_view::npos) slash = path.size();
    if (path.substr(start, slash - start) == component) return true;
    start = slash + 1;
  }
  return false;
}

}  // namespace

void assign_categories(std::vector<TheoremRecord>& records,
                       const std::vector<CategoryRule>& rules,
                       CategoryStats* stats) {
  CategoryStats local;
  for (TheoremRecord& rec : records) {
    bool matched = false;
    for (const CategoryRule& rule : rules) {
      if (path_has_component(rec.source_path, rule.path_component)) {
        rec.category = rule.category;
        matched = true;
        break;
      }
    }
    if (!matched) {
      rec.category = Category::Classical;
      ++local.unmatched;
    }
  }
  if (stats) *stats = local;
}

// ---------------------------------------------------------------------------
// Splitting.

SplitResult split_corpus(std::vector<TheoremRecord> records,
                         const SplitConfig& cfg) {
  if (records.empty()) {
    throw ConfigError("split_corpus: empty corpus");
  }
  if (!(cfg.ratio_train > 0.0 && cfg.ratio_train < 1.0)) {
    throw ConfigError("split_corpus: ratio_train must lie in (0,1)");
  }
  std::size_t n_train = 0, n_test = 0;
  const std::size_t n = records.size();
  if (cfg.exact_counts) {
    n_train = cfg.exact_counts->first;
    n_test = cfg.exact_counts->second;
    if (n_train + n_test > n) {
      throw ConfigError("split_corpus: exact counts exceed corpus size");
    }
  } else {
    n_train = static_cast<std::size_t>(
        std::llround(cfg.ratio_train * static_cast<double>(n)));
    n_train = std::min(n_train, n);
    n_test = n - n_train;
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  seeded_shuffle(order, cfg.rng_seed);

  SplitResult out;
  for (std::size_t pos = 0; pos < n; ++pos) {
    TheoremRecord rec = records[order[pos]];
    if (pos < n_train) {
      rec.split = Split::Train;
      out.train.push_back(std::move(rec));
    } else if (pos < n_train + n_test) {
      rec.split = Split::Test;
      out.test.push_back(std::move(rec));
    } else {
      rec.split = Split::Unassigned;
      out.unassigned.push_back(std::move(rec));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization.

Json record_to_json(const TheoremRecord& r) {
  Json j;
  j["id"] = r.id;
  j["source_path"] = r.source_path;
  j["header"] = r.header;
  j["statement"] = r.statement;
  j["proof"] = r.proof;
  j["doc_comment"] = r.doc_comment ? Json(*r.doc_comment) : Json(nullptr);
  j["category"] = to_string(r.category);
  j["split"] = to_string(r.split);
  j["token_len"] = r.token_len;
  return j;
}

TheoremRecord record_from_json(const Json& j) {
  TheoremRecord r;
  r.id = j.at("id").get<std::string>();
  r.source_path = j.at("source_path").get<std::string>();
  r.header = j.at("header").get<std::string>();
  r.statement = j.at("statement").get<std::string>();
  r.proof = j.at("proof").get<std::string>();
  if (j.contains("doc_comment") && !j.at("doc_comment").is_null()) {
    r.doc_comment = j.at("doc_comment").get<std::string>();
  }
  r.category = category_from_string(j.at("category").get<std::string>());
  r.split = split_from_string(j.at("split").get<std::string>());
  r.token_len = j.at("token_len").get<std::size_t>();
  return r;
}

void save_corpus(const std::string& path,
                 const std::vector<TheoremRecord>& records) {
  std::vector<Json> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(record_to_json(r));
  write_jsonl(path, rows);
}

std::vector<TheoremRecord> load_corpus(const std::string& path) {
  std::vector<TheoremRecord> records;
  for (const Json& j : read_jsonl(path)) {
    records.push_back(record_from_json(j));
  }
  return records;
}

std::string statement_decl_name(std::string_view statement) {
  const LexInfo info = lex(statement);
  std::size_t p = 0;
  while (p < statement.size()) {
    while (p < statement.size() &&
           (std::isspace(static_cast<unsigned char>(statement[p])) ||
            !info.mask[p])) {
      ++p;
    }
    const std::size_t after = skip_attribute_group(statement, info.mask, p);
    if (after == p) break;
    p = after;
  }
  for (std::string_view kw : {"lemma", "theorem"}) {
    if (word_at(statement, p, kw)) {
      p += kw.size();
      break;
    }
  }
  while (p < statement.size() &&
         std::isspace(static_cast<unsigned char>(statement[p]))) {
    ++p;
  }
  std::size_t q = p;
  while (q < statement.size() &&
         (is_ident_char(static_cast<unsigned char>(statement[q])) ||
          statement[q] == '.')) {
    ++q;
  }
  return std::string(statement.substr(p, q - p));
}

}  // namespace physforge
