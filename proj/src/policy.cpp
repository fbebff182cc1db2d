#include "promptecho/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "promptecho/errors.hpp"
#include "promptecho/rng.hpp"

namespace promptecho {

namespace {

constexpr int kMaxPlacementRetries = 8;

template <size_t N>
std::array<double, N> softmax(const std::array<double, N>& logits) {
  double m = *std::max_element(logits.begin(), logits.end());
  std::array<double, N> out{};
  double z = 0.0;
  for (size_t i = 0; i < N; ++i) {
    out[i] = std::exp(logits[i] - m);
    z += out[i];
  }
  for (auto& v : out) v /= z;
  return out;
}

/// Conditioning row indices for object i of the caption: the token value
/// of the i-th spec, or the extra "unconditioned" row past n_c.
struct CondRows {
  int shape, color, row, col;
};

CondRows cond_rows(const std::vector<SceneObject>& specs, size_t i) {
  if (i < specs.size()) {
    return {static_cast<int>(specs[i].shape), static_cast<int>(specs[i].color), specs[i].row,
            specs[i].col};
  }
  return {kNumShapes, kNumColors, kGridSize, kGridSize};
}

int clamp_count_row(size_t n_c) { return static_cast<int>(std::min<size_t>(n_c, kCountSupport - 1)); }

/// Joint cell distribution over free cells, renormalized:
/// p(r,c | free) = sm_row(r) * sm_col(c) / Z.
struct CellDist {
  std::array<double, kGridSize> row_probs;
  std::array<double, kGridSize> col_probs;
  double z;  // sum of row*col over free cells
  uint32_t occupied;

  double prob(int r, int c) const {
    return row_probs[static_cast<size_t>(r)] * col_probs[static_cast<size_t>(c)] / z;
  }
  /// Marginals over the renormalized distribution (for gradients).
  std::array<double, kGridSize> row_marginal() const {
    std::array<double, kGridSize> m{};
    for (int r = 0; r < kGridSize; ++r)
      for (int c = 0; c < kGridSize; ++c)
        if (!(occupied & (1u << (r * kGridSize + c))))
          m[static_cast<size_t>(r)] += row_probs[static_cast<size_t>(r)] *
                                       col_probs[static_cast<size_t>(c)] / z;
    return m;
  }
  std::array<double, kGridSize> col_marginal() const {
    std::array<double, kGridSize> m{};
    for (int r = 0; r < kGridSize; ++r)
      for (int c = 0; c < kGridSize; ++c)
        if (!(occupied & (1u << (r * kGridSize + c))))
          m[static_cast<size_t>(c)] += row_probs[static_cast<size_t>(r)] *
                                       col_probs[static_cast<size_t>(c)] / z;
    return m;
  }
};

CellDist make_cell_dist(const PolicyParams& params, const CondRows& rows, uint32_t occupied) {
  CellDist d;
  d.row_probs = softmax(params.row_table[static_cast<size_t>(rows.row)]);
  d.col_probs = softmax(params.col_table[static_cast<size_t>(rows.col)]);
  d.occupied = occupied;
  d.z = 0.0;
  for (int r = 0; r < kGridSize; ++r)
    for (int c = 0; c < kGridSize; ++c)
      if (!(occupied & (1u << (r * kGridSize + c))))
        d.z += d.row_probs[static_cast<size_t>(r)] * d.col_probs[static_cast<size_t>(c)];
  return d;
}

}  // namespace

PolicyParams::PolicyParams() : vocab_id(Vocabulary::builtin().id()) {}

void PolicyGrad::add_scaled(const PolicyGrad& other, double scale) {
  auto add = [scale](auto& dst, const auto& src) {
    for (size_t i = 0; i < dst.size(); ++i)
      for (size_t j = 0; j < dst[i].size(); ++j) dst[i][j] += scale * src[i][j];
  };
  add(count_logits, other.count_logits);
  add(shape_table, other.shape_table);
  add(color_table, other.color_table);
  add(row_table, other.row_table);
  add(col_table, other.col_table);
}

bool PolicyGrad::finite() const {
  bool ok = true;
  auto scan = [&](const auto& table) {
    for (const auto& row : table)
      for (double v : row) ok = ok && std::isfinite(v);
  };
  scan(count_logits);
  scan(shape_table);
  scan(color_table);
  scan(row_table);
  scan(col_table);
  return ok;
}

double PolicyGrad::max_abs() const {
  double m = 0.0;
  auto scan = [&](const auto& table) {
    for (const auto& row : table)
      for (double v : row) m = std::max(m, std::fabs(v));
  };
  scan(count_logits);
  scan(shape_table);
  scan(color_table);
  scan(row_table);
  scan(col_table);
  return m;
}

namespace {

nlohmann::json table_json(const auto& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : table) rows.push_back(std::vector<double>(row.begin(), row.end()));
  return nlohmann::json{{"shape", {table.size(), table[0].size()}}, {"data", rows}};
}

template <typename Table>
void table_from_json(const nlohmann::json& j, Table& table) {
  auto shape = j.at("shape");
  if (shape[0] != table.size() || shape[1] != table[0].size())
    throw ConfigError("policy checkpoint table shape mismatch");
  const auto& rows = j.at("data");
  for (size_t i = 0; i < table.size(); ++i)
    for (size_t k = 0; k < table[i].size(); ++k) table[i][k] = rows[i][k].get<double>();
}

}  // namespace

std::string PolicyParams::to_json_string() const {
  nlohmann::json j{{"version", 1},
                   {"vocab_id", vocab_id},
                   {"count_logits", table_json(count_logits)},
                   {"shape_table", table_json(shape_table)},
                   {"color_table", table_json(color_table)},
                   {"row_table", table_json(row_table)},
                   {"col_table", table_json(col_table)}};
  return j.dump(2);
}

PolicyParams PolicyParams::from_json_string(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.at("version") != 1) throw ConfigError("unsupported policy checkpoint version");
  PolicyParams p;
  p.vocab_id = j.at("vocab_id");
  table_from_json(j.at("count_logits"), p.count_logits);
  table_from_json(j.at("shape_table"), p.shape_table);
  table_from_json(j.at("color_table"), p.color_table);
  table_from_json(j.at("row_table"), p.row_table);
  table_from_json(j.at("col_table"), p.col_table);
  return p;
}

void PolicyParams::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out << to_json_string() << "\n";
}

PolicyParams PolicyParams::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read checkpoint: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json_string(text);
}

std::vector<SampleRecord> sample(const PolicyParams& params, const TokenSeq& caption, int K,
                                 uint64_t seed) {
  if (K < 1) throw ConfigError("sample needs K >= 1");
  std::vector<SceneObject> specs = parse_caption(caption);
  int count_row = clamp_count_row(specs.size());
  auto count_probs = softmax(params.count_logits[static_cast<size_t>(count_row)]);

  std::vector<SampleRecord> records;
  records.reserve(static_cast<size_t>(K));
  for (int j = 0; j < K; ++j) {
    uint64_t record_seed = stream_seed(seed, {static_cast<uint64_t>(j)});
    Rng rng(record_seed);
    SampleRecord rec;
    rec.seed = record_seed;
    rec.vocab_id = params.vocab_id;
    rec.caption_objects = static_cast<int>(specs.size());
    rec.count = rng.categorical(count_probs);
    double lp = std::log(count_probs[static_cast<size_t>(rec.count)]);

    uint32_t occupied = 0;
    for (int i = 0; i < rec.count; ++i) {
      CondRows rows = cond_rows(specs, static_cast<size_t>(i));
      auto shape_probs = softmax(params.shape_table[static_cast<size_t>(rows.shape)]);
      auto color_probs = softmax(params.color_table[static_cast<size_t>(rows.color)]);
      SampleRecord::ObjectChoice choice;
      choice.occupied_before = occupied;
      choice.shape = rng.categorical(shape_probs);
      choice.color = rng.categorical(color_probs);

      CellDist cell_dist = make_cell_dist(params, rows, occupied);
      choice.fallback = true;
      choice.row = -1;
      choice.col = -1;
      for (int attempt = 0; attempt < kMaxPlacementRetries; ++attempt) {
        int r = rng.categorical(cell_dist.row_probs);
        int c = rng.categorical(cell_dist.col_probs);
        if (!(occupied & (1u << (r * kGridSize + c)))) {
          choice.row = r;
          choice.col = c;
          choice.fallback = false;
          break;
        }
      }
      if (choice.fallback) {
        for (int cell = 0; cell < kGridSize * kGridSize; ++cell)
          if (!(occupied & (1u << cell))) {
            choice.row = cell / kGridSize;
            choice.col = cell % kGridSize;
            break;
          }
      }
      occupied |= 1u << (choice.row * kGridSize + choice.col);
      lp += std::log(shape_probs[static_cast<size_t>(choice.shape)]);
      lp += std::log(color_probs[static_cast<size_t>(choice.color)]);
      lp += std::log(cell_dist.prob(choice.row, choice.col));

      rec.choices.push_back(choice);
      rec.scene.objects.push_back(SceneObject{static_cast<Shape>(choice.shape),
                                              static_cast<Color>(choice.color), choice.row,
                                              choice.col});
    }
    rec.scene.sort_reading_order();
    rec.log_prob = lp;
    records.push_back(std::move(rec));
  }
  return records;
}

namespace {

void check_compatible(const PolicyParams& params, const SampleRecord& record,
                      const std::vector<SceneObject>& specs) {
  if (record.vocab_id != params.vocab_id)
    throw IncompatibleRecord("record vocabulary '" + record.vocab_id +
                             "' does not match params vocabulary '" + params.vocab_id + "'");
  if (record.caption_objects != static_cast<int>(specs.size()))
    throw IncompatibleRecord("record was sampled against a caption with " +
                             std::to_string(record.caption_objects) + " objects, got " +
                             std::to_string(specs.size()));
  if (record.count != static_cast<int>(record.choices.size()) || record.count > kMaxObjects ||
      record.count < 0)
    throw IncompatibleRecord("record choice list does not match its count");
  for (const auto& ch : record.choices) {
    if (ch.shape < 0 || ch.shape >= kNumShapes || ch.color < 0 || ch.color >= kNumColors ||
        ch.row < 0 || ch.row >= kGridSize || ch.col < 0 || ch.col >= kGridSize)
      throw IncompatibleRecord("record choice out of range");
    if (ch.occupied_before & (1u << (ch.row * kGridSize + ch.col)))
      throw IncompatibleRecord("record places an object on an occupied cell");
  }
}

}  // namespace

LogProbGrad log_prob_and_grad(const PolicyParams& params, const SampleRecord& record,
                              const TokenSeq& caption) {
  std::vector<SceneObject> specs = parse_caption(caption);
  check_compatible(params, record, specs);

  LogProbGrad out;
  out.log_prob = 0.0;

  int count_row = clamp_count_row(specs.size());
  auto count_probs = softmax(params.count_logits[static_cast<size_t>(count_row)]);
  out.log_prob += std::log(count_probs[static_cast<size_t>(record.count)]);
  for (int k = 0; k < kCountSupport; ++k)
    out.grad.count_logits[static_cast<size_t>(count_row)][static_cast<size_t>(k)] =
        (k == record.count ? 1.0 : 0.0) - count_probs[static_cast<size_t>(k)];

  for (size_t i = 0; i < record.choices.size(); ++i) {
    const auto& ch = record.choices[i];
    CondRows rows = cond_rows(specs, i);
    auto shape_probs = softmax(params.shape_table[static_cast<size_t>(rows.shape)]);
    auto color_probs = softmax(params.color_table[static_cast<size_t>(rows.color)]);
    out.log_prob += std::log(shape_probs[static_cast<size_t>(ch.shape)]);
    out.log_prob += std::log(color_probs[static_cast<size_t>(ch.color)]);
    for (int k = 0; k < kNumShapes; ++k)
      out.grad.shape_table[static_cast<size_t>(rows.shape)][static_cast<size_t>(k)] +=
          (k == ch.shape ? 1.0 : 0.0) - shape_probs[static_cast<size_t>(k)];
    for (int k = 0; k < kNumColors; ++k)
      out.grad.color_table[static_cast<size_t>(rows.color)][static_cast<size_t>(k)] +=
          (k == ch.color ? 1.0 : 0.0) - color_probs[static_cast<size_t>(k)];

    // cell slot under the renormalized collision-free distribution:
    // d log p / d row_logit_k = 1[k = chosen row] - P(row = k | free cells)
    CellDist cell_dist = make_cell_dist(params, rows, ch.occupied_before);
    out.log_prob += std::log(cell_dist.prob(ch.row, ch.col));
    auto row_marg = cell_dist.row_marginal();
    auto col_marg = cell_dist.col_marginal();
    for (int k = 0; k < kGridSize; ++k) {
      out.grad.row_table[static_cast<size_t>(rows.row)][static_cast<size_t>(k)] +=
          (k == ch.row ? 1.0 : 0.0) - row_marg[static_cast<size_t>(k)];
      out.grad.col_table[static_cast<size_t>(rows.col)][static_cast<size_t>(k)] +=
          (k == ch.col ? 1.0 : 0.0) - col_marg[static_cast<size_t>(k)];
    }
  }
  return out;
}

double log_prob(const PolicyParams& params, const SampleRecord& record, const TokenSeq& caption) {
  std::vector<SceneObject> specs = parse_caption(caption);
  check_compatible(params, record, specs);
  int count_row = clamp_count_row(specs.size());
  auto count_probs = softmax(params.count_logits[static_cast<size_t>(count_row)]);
  double lp = std::log(count_probs[static_cast<size_t>(record.count)]);
  for (size_t i = 0; i < record.choices.size(); ++i) {
    const auto& ch = record.choices[i];
    CondRows rows = cond_rows(specs, i);
    auto shape_probs = softmax(params.shape_table[static_cast<size_t>(rows.shape)]);
    auto color_probs = softmax(params.color_table[static_cast<size_t>(rows.color)]);
    CellDist cell_dist = make_cell_dist(params, rows, ch.occupied_before);
    lp += std::log(shape_probs[static_cast<size_t>(ch.shape)]);
    lp += std::log(color_probs[static_cast<size_t>(ch.color)]);
    lp += std::log(cell_dist.prob(ch.row, ch.col));
  }
  return lp;
}

}  // namespace promptecho
