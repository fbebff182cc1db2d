#include "promptecho/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "json.hpp"
#include "promptecho/errors.hpp"
#include "promptecho/hash.hpp"
#include "promptecho/rng.hpp"

namespace promptecho {

namespace {

std::string record_id(const std::string& caption, const std::string& backend,
                      const std::string& query) {
  uint64_t h = fnv1a64(caption);
  h = fnv1a64(backend, h);
  h = fnv1a64(query, h);
  return to_hex(h);
}

}  // namespace

std::vector<CaptionRecord> build_corpus(int n_scenes, const VlmBackend& backend, uint64_t seed,
                                        const CorpusOptions& options) {
  if (n_scenes < 1) throw ConfigError("build_corpus needs n_scenes >= 1");
  if (options.max_objects < 0 || options.max_objects > kMaxObjects)
    throw ConfigError("max_objects out of range");
  const std::string query_text = backend.vocab().detokenize(caption_query());
  const std::string backend_name = backend.caps().name;

  std::vector<CaptionRecord> records;
  std::unordered_set<std::string> seen;
  for (int i = 0; i < n_scenes; ++i) {
    Rng rng(stream_seed(seed, {static_cast<uint64_t>(i)}));
    Scene scene = random_scene(rng, options.max_objects);
    Image image = render(scene);
    TokenSeq caption = backend.generate(image, caption_query(), options.caption_max_tokens,
                                        /*temperature=*/0.0,
                                        stream_seed(seed, {static_cast<uint64_t>(i), 1}));
    CaptionRecord rec;
    rec.caption = backend.vocab().detokenize(caption);
    rec.source = backend_name == "oracle" ? "oracle" : "external";
    rec.backend = backend_name;
    rec.query = query_text;
    rec.id = record_id(rec.caption, rec.backend, rec.query);
    if (seen.insert(rec.id).second) records.push_back(std::move(rec));
  }
  return records;
}

SplitManifest split(const std::vector<CaptionRecord>& records, double heldout_fraction,
                    uint64_t seed) {
  if (!(heldout_fraction > 0.0 && heldout_fraction < 1.0))
    throw ConfigError("heldout_fraction must be in (0, 1)");
  if (records.empty()) throw DegenerateSplit("cannot split an empty corpus");

  std::vector<std::pair<uint64_t, std::string>> salted;
  salted.reserve(records.size());
  for (const auto& r : records) {
    uint64_t h = fnv1a64(r.id);
    h ^= seed + 0x9e3779b97f4a7c15ULL;
    uint64_t state = h;
    salted.emplace_back(splitmix64(state), r.id);
  }
  std::sort(salted.begin(), salted.end());

  size_t n_heldout = static_cast<size_t>(
      std::llround(heldout_fraction * static_cast<double>(records.size())));
  if (n_heldout == 0 || n_heldout >= records.size())
    throw DegenerateSplit("split would leave an empty side: " + std::to_string(n_heldout) +
                          " held out of " + std::to_string(records.size()));

  SplitManifest manifest;
  manifest.split_seed = seed;
  manifest.heldout_fraction = heldout_fraction;
  for (size_t i = 0; i < salted.size(); ++i) {
    (i < n_heldout ? manifest.heldout_ids : manifest.train_ids).push_back(salted[i].second);
  }
  return manifest;
}

std::string SplitManifest::to_json_string() const {
  nlohmann::json j{{"train_ids", train_ids},
                   {"heldout_ids", heldout_ids},
                   {"split_seed", split_seed},
                   {"heldout_fraction", heldout_fraction}};
  return j.dump(2);
}

SplitManifest SplitManifest::from_json_string(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  SplitManifest m;
  m.train_ids = j.at("train_ids").get<std::vector<std::string>>();
  m.heldout_ids = j.at("heldout_ids").get<std::vector<std::string>>();
  m.split_seed = j.at("split_seed");
  m.heldout_fraction = j.at("heldout_fraction");
  return m;
}

void write_corpus_jsonl(const std::vector<CaptionRecord>& records,
                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write corpus: " + path.string());
  for (const auto& r : records) {
    nlohmann::json j{{"id", r.id}, {"caption", r.caption}, {"source", r.source},
                     {"backend", r.backend}, {"query", r.query}};
    out << j.dump() << "\n";
  }
}

std::vector<CaptionRecord> read_corpus_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read corpus: " + path.string());
  std::vector<CaptionRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    records.push_back(CaptionRecord{j.at("id"), j.at("caption"), j.at("source"), j.at("backend"),
                                    j.at("query")});
  }
  return records;
}

}  // namespace promptecho
