#include <filesystem>
#include <set>

#include "doctest.h"
#include "promptecho/corpus.hpp"
#include "promptecho/errors.hpp"

using namespace promptecho;

TEST_CASE("oracle corpus captions are canonical and reparse") {
  OracleBackend oracle(0.9);
  auto records = build_corpus(100, oracle, 5);
  const auto& v = Vocabulary::builtin();
  for (const auto& r : records) {
    TokenSeq caption = v.tokenize(r.caption);
    auto specs = parse_caption(caption);  // grammar closure
    // captioning at temperature 0 means the caption is canonical for its
    // scene: rebuilding the scene from the parse reproduces the text
    Scene scene;
    scene.objects = specs;
    scene.sort_reading_order();
    CHECK(v.detokenize(canonical_caption(scene)) == r.caption);
    CHECK(r.source == "oracle");
    CHECK(r.backend == "oracle");
    CHECK(r.query == v.detokenize(caption_query()));
  }
}

TEST_CASE("corpus build is byte-identical across runs") {
  OracleBackend oracle(0.9);
  auto a = build_corpus(200, oracle, 17);
  auto b = build_corpus(200, oracle, 17);
  CHECK(a == b);
}

TEST_CASE("duplicate scenes deduplicate by id") {
  OracleBackend oracle(0.9);
  CorpusOptions opts;
  opts.max_objects = 1;  // tiny scene space forces collisions
  auto records = build_corpus(400, oracle, 23, opts);
  CHECK(records.size() < 400);
  std::set<std::string> ids;
  for (const auto& r : records) ids.insert(r.id);
  CHECK(ids.size() == records.size());
}

TEST_CASE("split") {
  OracleBackend oracle(0.9);
  auto records = build_corpus(60, oracle, 29);
  SUBCASE("10 records at fraction 0.2 hold out exactly 2") {
    std::vector<CaptionRecord> ten(records.begin(), records.begin() + 10);
    SplitManifest m = split(ten, 0.2, 1);
    CHECK(m.heldout_ids.size() == 2);
    CHECK(m.train_ids.size() == 8);
  }
  SUBCASE("same seed gives the same manifest") {
    SplitManifest a = split(records, 0.25, 7);
    SplitManifest b = split(records, 0.25, 7);
    CHECK(a.train_ids == b.train_ids);
    CHECK(a.heldout_ids == b.heldout_ids);
  }
  SUBCASE("different seeds move ids across the split") {
    SplitManifest a = split(records, 0.25, 7);
    SplitManifest b = split(records, 0.25, 8);
    CHECK(a.heldout_ids != b.heldout_ids);
  }
  SUBCASE("sides are disjoint and cover all ids") {
    SplitManifest m = split(records, 0.3, 11);
    std::set<std::string> all;
    for (const auto& id : m.train_ids) all.insert(id);
    for (const auto& id : m.heldout_ids) CHECK(all.insert(id).second);
    CHECK(all.size() == records.size());
  }
  SUBCASE("degenerate splits are rejected") {
    std::vector<CaptionRecord> two(records.begin(), records.begin() + 2);
    CHECK_THROWS_AS(split(two, 0.999, 1), DegenerateSplit);
  }
  SUBCASE("out-of-range fractions are usage errors") {
    CHECK_THROWS_AS(split(records, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(split(records, 1.0, 1), ConfigError);
    CHECK_THROWS_AS(split(records, -0.5, 1), ConfigError);
  }
}

TEST_CASE("corpus JSONL round trip") {
  OracleBackend oracle(0.9);
  auto records = build_corpus(50, oracle, 31);
  auto path = std::filesystem::temp_directory_path() / "promptecho_corpus_test.jsonl";
  write_corpus_jsonl(records, path);
  auto back = read_corpus_jsonl(path);
  CHECK(back == records);
  std::filesystem::remove(path);

  CHECK_THROWS_AS(read_corpus_jsonl("/nonexistent/corpus.jsonl"), IoError);
}

TEST_CASE("manifest JSON round trip") {
  OracleBackend oracle(0.9);
  auto records = build_corpus(40, oracle, 37);
  SplitManifest m = split(records, 0.25, 13);
  SplitManifest back = SplitManifest::from_json_string(m.to_json_string());
  CHECK(back.train_ids == m.train_ids);
  CHECK(back.heldout_ids == m.heldout_ids);
  CHECK(back.split_seed == m.split_seed);
  CHECK(back.heldout_fraction == m.heldout_fraction);
}
