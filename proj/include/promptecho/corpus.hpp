#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "promptecho/backend.hpp"

namespace promptecho {

/// One caption produced during data preparation. The id is a content hash
/// of (caption, backend, query), so identical captions from the same
/// pipeline deduplicate naturally. The same (backend, query) pair must be
/// used again at reward time; the trainer enforces this.
struct CaptionRecord {
  std::string id;
  std::string caption;
  std::string source;   // "oracle" | "external"
  std::string backend;  // backend caps name
  std::string query;    // detokenized guiding query

  bool operator==(const CaptionRecord&) const = default;
};

/// Deterministic train/held-out split: ids are ordered by a seed-salted
/// hash and the first round(fraction * n) become the held-out side.
struct SplitManifest {
  std::vector<std::string> train_ids;
  std::vector<std::string> heldout_ids;
  uint64_t split_seed = 0;
  double heldout_fraction = 0.0;

  std::string to_json_string() const;
  static SplitManifest from_json_string(const std::string& text);
};

struct CorpusOptions {
  int caption_max_tokens = 64;
  int max_objects = kMaxObjects;  // scene-space knob; smaller forces duplicates
};

/// Samples random scenes, renders them, captions each at temperature 0
/// with the fixed caption query, and deduplicates by id. Training only
/// ever consumes the caption text afterwards; source images are dropped.
std::vector<CaptionRecord> build_corpus(int n_scenes, const VlmBackend& backend, uint64_t seed,
                                        const CorpusOptions& options = {});

/// Hash-salted split. Throws ConfigError unless 0 < fraction < 1 and
/// DegenerateSplit when either side would be empty.
SplitManifest split(const std::vector<CaptionRecord>& records, double heldout_fraction,
                    uint64_t seed);

// Corpus JSONL: one {"id","caption","source","backend","query"} per line.
void write_corpus_jsonl(const std::vector<CaptionRecord>& records,
                        const std::filesystem::path& path);
std::vector<CaptionRecord> read_corpus_jsonl(const std::filesystem::path& path);

}  // namespace promptecho
