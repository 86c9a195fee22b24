#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "physforge/corpus.hpp"
#include "physforge/util/strings.hpp"

namespace physforge::testing {

/// The worked matrix-square example used by the prompt goldens.
inline TheoremRecord minkowski_record() {
  TheoremRecord rec;
  rec.source_path = "Relativity/MinkowskiMatrix.lean";
  rec.header =
      "import Mathlib.Algebra.Lie.Classical\n"
      "import Mathlib.Analysis.Normed.Ring.Lemmas\n"
      "\n"
      "open Matrix\n"
      "\n"
      "def minkowskiMatrix {d : \xE2\x84\x95} : Matrix (Fin 1 \xE2\x8A\x95 Fin d) "
      "(Fin 1 \xE2\x8A\x95 Fin d) \xE2\x84\x9D :=\n"
      "  LieAlgebra.Orthogonal.indefiniteDiagonal (Fin 1) (Fin d) \xE2\x84\x9D\n"
      "\n"
      "namespace minkowskiMatrix\n"
      "\n"
      "variable {d : \xE2\x84\x95}\n"
      "\n"
      "scoped[minkowskiMatrix] notation \"\xCE\xB7\" => minkowskiMatrix";
  rec.doc_comment =
      "/-- This theorem states that the matrix product of the Minkowski "
      "metric with itself yields the identity matrix.-/";
  rec.statement =
      "@[simp]\nlemma sq : @minkowskiMatrix d * minkowskiMatrix = 1";
  rec.proof = ":= by\n  simp [minkowskiMatrix]";
  rec.category = Category::Relativity;
  rec.id = record_content_id(rec.header, rec.statement, rec.proof);
  rec.token_len = whitespace_token_count(rec.header + "\n" + rec.statement +
                                         "\n" + rec.proof);
  return rec;
}

inline std::string test_data_path(const std::string& name) {
  return std::string(PHYSFORGE_TEST_DATA_DIR) + "/" + name;
}

/// Self-cleaning temp directory for filesystem-facing tests.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    namespace fs = std::filesystem;
    path_ = fs::temp_directory_path() /
            ("physforge_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter_++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const {
    return (path_ / name).string();
  }

 private:
  static inline int counter_ = 0;
  std::filesystem::path path_;
};

inline TheoremRecord simple_record(const std::string& name,
                                   const std::string& proof = ":= by rfl") {
  TheoremRecord rec;
  rec.source_path = "Fixtures/" + name + ".lean";
  rec.header = "import Mathlib";
  rec.statement = "lemma " + name + " : 1 + 1 = 2";
  rec.proof = proof;
  rec.id = record_content_id(rec.header, rec.statement, rec.proof);
  rec.token_len = whitespace_token_count(rec.header + "\n" + rec.statement +
                                         "\n" + rec.proof);
  return rec;
}

}  // namespace physforge::testing
