#include <thread>

#include "doctest.h"
#include "fixtures.hpp"
#include "physforge/util/hash.hpp"
#include "physforge/util/rng.hpp"
#include "physforge/util/strings.hpp"
#include "physforge/util/subprocess.hpp"
#include "physforge/util/worker_pool.hpp"

using namespace physforge;

TEST_CASE("sha256 known vectors") {
  CHECK(sha256_hex("") ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
  // Incremental updates agree with one-shot hashing across block boundaries.
  std::string long_input(200, 'x');
  Sha256 h;
  h.update(long_input.substr(0, 63));
  h.update(long_input.substr(63));
  Sha256 h2;
  h2.update(long_input);
  CHECK(h.digest() == h2.digest());
}

TEST_CASE("string helpers") {
  CHECK(trim("  a b \n") == "a b");
  CHECK(collapse_whitespace("  a \t\n b   c ") == "a b c");
  CHECK(replace_all("aaa", "a", "bb") == "bbbbbb");
  CHECK(split_lines("a\nb\n").size() == 2);
  CHECK(split_lines("a\nb").size() == 2);
}

TEST_CASE("bounded rng is deterministic and in range") {
  std::mt19937_64 a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t x = bounded_u64(a, 17);
    CHECK(x < 17);
    CHECK(x == bounded_u64(b, 17));
  }
  std::vector<int> v1{1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<int> v2 = v1;
  seeded_shuffle(v1, std::uint64_t{7});
  seeded_shuffle(v2, std::uint64_t{7});
  CHECK(v1 == v2);
}

TEST_CASE("parallel_map preserves order and bounds workers") {
  std::vector<int> items(100);
  for (int i = 0; i < 100; ++i) items[static_cast<std::size_t>(i)] = i;
  const auto doubled =
      parallel_map(items, 8, [](int x) { return 2 * x; });
  for (int i = 0; i < 100; ++i) {
    CHECK(doubled[static_cast<std::size_t>(i)] == 2 * i);
  }
  // Exceptions propagate.
  CHECK_THROWS(parallel_map(items, 4, [](int x) {
    if (x == 50) throw std::runtime_error("boom");
    return x;
  }));
}

TEST_CASE("run_process captures output and exit code") {
  const ProcessResult ok = run_process({"/bin/sh", "-c", "echo hi; exit 3"}, "", 10);
  CHECK_FALSE(ok.spawn_failed);
  CHECK_FALSE(ok.timed_out);
  CHECK(ok.exit_code == 3);
  CHECK(ok.output.find("hi") != std::string::npos);
}

TEST_CASE("run_process kills on timeout") {
  const ProcessResult slow = run_process({"/bin/sleep", "5"}, "", 0.2);
  CHECK(slow.timed_out);
  CHECK(slow.wall_seconds < 3.0);
}

TEST_CASE("run_process flags missing binaries") {
  const ProcessResult missing =
      run_process({"/nonexistent/definitely_not_a_binary"}, "", 5);
  CHECK(missing.spawn_failed);
}

TEST_CASE("atomic_write_file round-trips") {
  physforge::testing::TempDir dir("util");
  const std::string path = dir.file("out.txt");
  atomic_write_file(path, "payload");
  CHECK(read_file(path) == "payload");
}
