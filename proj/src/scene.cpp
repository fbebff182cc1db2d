#include "promptecho/scene.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "promptecho/errors.hpp"

namespace promptecho {

const std::array<const char*, kNumShapes>& shape_words() {
  static const std::array<const char*, kNumShapes> w = {"circle", "square", "triangle"};
  return w;
}

const std::array<const char*, kNumColors>& color_words() {
  static const std::array<const char*, kNumColors> w = {"red", "green", "blue", "yellow", "purple"};
  return w;
}

const std::array<const char*, kGridSize>& row_words() {
  static const std::array<const char*, kGridSize> w = {"top", "middle", "bottom"};
  return w;
}

const std::array<const char*, kGridSize>& col_words() {
  static const std::array<const char*, kGridSize> w = {"left", "center", "right"};
  return w;
}

Rgb color_rgb(Color c) {
  switch (c) {
    case Color::kRed: return {255, 0, 0};
    case Color::kGreen: return {0, 255, 0};
    case Color::kBlue: return {0, 0, 255};
    case Color::kYellow: return {255, 255, 0};
    case Color::kPurple: return {128, 0, 128};
  }
  throw ConfigError("bad color enum");
}

void Scene::validate() const {
  if (objects.size() > kMaxObjects) throw ConfigError("scene has too many objects");
  for (size_t i = 0; i < objects.size(); ++i) {
    const auto& o = objects[i];
    if (o.row < 0 || o.row >= kGridSize || o.col < 0 || o.col >= kGridSize)
      throw ConfigError("object cell out of range");
    for (size_t j = i + 1; j < objects.size(); ++j) {
      if (objects[j].row == o.row && objects[j].col == o.col)
        throw ConfigError("two objects share a cell");
    }
    if (i > 0) {
      const auto& p = objects[i - 1];
      if (p.row * kGridSize + p.col >= o.row * kGridSize + o.col)
        throw ConfigError("objects not in reading order");
    }
  }
}

void Scene::sort_reading_order() {
  std::sort(objects.begin(), objects.end(), [](const SceneObject& a, const SceneObject& b) {
    return a.row * kGridSize + a.col < b.row * kGridSize + b.col;
  });
}

bool Scene::cell_occupied(int row, int col) const {
  for (const auto& o : objects)
    if (o.row == row && o.col == col) return true;
  return false;
}

std::string scene_to_json(const Scene& scene) {
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : scene.objects) {
    objs.push_back({{"shape", shape_words()[static_cast<size_t>(o.shape)]},
                    {"color", color_words()[static_cast<size_t>(o.color)]},
                    {"row", o.row},
                    {"col", o.col}});
  }
  return nlohmann::json{{"objects", objs}}.dump();
}

Scene scene_from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  Scene scene;
  for (const auto& jo : j.at("objects")) {
    SceneObject o;
    std::string shape = jo.at("shape"), color = jo.at("color");
    bool found = false;
    for (int s = 0; s < kNumShapes; ++s)
      if (shape == shape_words()[static_cast<size_t>(s)]) { o.shape = static_cast<Shape>(s); found = true; }
    if (!found) throw ConfigError("unknown shape: " + shape);
    found = false;
    for (int c = 0; c < kNumColors; ++c)
      if (color == color_words()[static_cast<size_t>(c)]) { o.color = static_cast<Color>(c); found = true; }
    if (!found) throw ConfigError("unknown color: " + color);
    o.row = jo.at("row");
    o.col = jo.at("col");
    scene.objects.push_back(o);
  }
  scene.sort_reading_order();
  scene.validate();
  return scene;
}

Scene random_scene(Rng& rng, int max_objects) {
  if (max_objects < 0 || max_objects > kMaxObjects) throw ConfigError("max_objects out of range");
  Scene scene;
  int count = static_cast<int>(rng.below(static_cast<uint64_t>(max_objects) + 1));
  std::vector<int> cells(kGridSize * kGridSize);
  for (size_t i = 0; i < cells.size(); ++i) cells[i] = static_cast<int>(i);
  // partial Fisher-Yates for distinct cells
  for (int i = 0; i < count; ++i) {
    int j = i + static_cast<int>(rng.below(cells.size() - static_cast<size_t>(i)));
    std::swap(cells[static_cast<size_t>(i)], cells[static_cast<size_t>(j)]);
  }
  for (int i = 0; i < count; ++i) {
    SceneObject o;
    o.shape = static_cast<Shape>(rng.below(kNumShapes));
    o.color = static_cast<Color>(rng.below(kNumColors));
    o.row = cells[static_cast<size_t>(i)] / kGridSize;
    o.col = cells[static_cast<size_t>(i)] % kGridSize;
    scene.objects.push_back(o);
  }
  scene.sort_reading_order();
  return scene;
}

namespace {

using CellMask = std::array<std::array<bool, kCellPixels>, kCellPixels>;

CellMask make_circle_mask() {
  CellMask m{};
  const double cx = (kCellPixels - 1) / 2.0, cy = cx, r = 6.5;
  for (int y = 0; y < kCellPixels; ++y)
    for (int x = 0; x < kCellPixels; ++x)
      m[static_cast<size_t>(y)][static_cast<size_t>(x)] =
          (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
  return m;
}

CellMask make_square_mask() {
  CellMask m{};
  for (int y = 3; y <= 12; ++y)
    for (int x = 3; x <= 12; ++x) m[static_cast<size_t>(y)][static_cast<size_t>(x)] = true;
  return m;
}

CellMask make_triangle_mask() {
  // apex top-center, horizontal base at the bottom
  CellMask m{};
  for (int y = 2; y <= 13; ++y) {
    double half = 0.5 + 6.5 * (y - 2) / 11.0;
    int lo = static_cast<int>(std::ceil(7.5 - half));
    int hi = static_cast<int>(std::floor(7.5 + half));
    for (int x = lo; x <= hi; ++x) m[static_cast<size_t>(y)][static_cast<size_t>(x)] = true;
  }
  return m;
}

const std::array<CellMask, kNumShapes>& shape_masks() {
  static const std::array<CellMask, kNumShapes> masks = {
      make_circle_mask(), make_square_mask(), make_triangle_mask()};
  return masks;
}

}  // namespace

Image render(const Scene& scene) {
  scene.validate();
  Image img(kSceneImageSize, kSceneImageSize, 255);
  img.provenance = "rendered";
  for (const auto& o : scene.objects) {
    const CellMask& mask = shape_masks()[static_cast<size_t>(o.shape)];
    Rgb rgb = color_rgb(o.color);
    int x0 = o.col * kCellPixels, y0 = o.row * kCellPixels;
    for (int y = 0; y < kCellPixels; ++y)
      for (int x = 0; x < kCellPixels; ++x)
        if (mask[static_cast<size_t>(y)][static_cast<size_t>(x)])
          img.set(x0 + x, y0 + y, rgb.r, rgb.g, rgb.b);
  }
  return img;
}

namespace {

enum class CellDecode { kEmpty, kObject, kUndecodable };

CellDecode decode_cell(const Image& img, int row, int col, SceneObject* out) {
  int x0 = col * kCellPixels, y0 = row * kCellPixels;
  bool any = false;
  for (int y = 0; y < kCellPixels && !any; ++y)
    for (int x = 0; x < kCellPixels; ++x) {
      const uint8_t* p = img.at(x0 + x, y0 + y);
      if (p[0] != 255 || p[1] != 255 || p[2] != 255) { any = true; break; }
    }
  if (!any) return CellDecode::kEmpty;
  for (int s = 0; s < kNumShapes; ++s) {
    const CellMask& mask = shape_masks()[static_cast<size_t>(s)];
    for (int c = 0; c < kNumColors; ++c) {
      Rgb rgb = color_rgb(static_cast<Color>(c));
      bool match = true;
      for (int y = 0; y < kCellPixels && match; ++y)
        for (int x = 0; x < kCellPixels; ++x) {
          const uint8_t* p = img.at(x0 + x, y0 + y);
          bool on = mask[static_cast<size_t>(y)][static_cast<size_t>(x)];
          uint8_t er = on ? rgb.r : 255, eg = on ? rgb.g : 255, eb = on ? rgb.b : 255;
          if (p[0] != er || p[1] != eg || p[2] != eb) { match = false; break; }
        }
      if (match) {
        out->shape = static_cast<Shape>(s);
        out->color = static_cast<Color>(c);
        out->row = row;
        out->col = col;
        return CellDecode::kObject;
      }
    }
  }
  return CellDecode::kUndecodable;
}

Scene decode_impl(const Image& image, bool lenient) {
  Scene scene;
  if (image.width != kSceneImageSize || image.height != kSceneImageSize) {
    if (lenient) return scene;  // out-of-format image decodes as empty
    throw UndecodableCell("image is not 48x48");
  }
  for (int row = 0; row < kGridSize; ++row)
    for (int col = 0; col < kGridSize; ++col) {
      SceneObject o;
      switch (decode_cell(image, row, col, &o)) {
        case CellDecode::kEmpty: break;
        case CellDecode::kObject: scene.objects.push_back(o); break;
        case CellDecode::kUndecodable:
          if (!lenient)
            throw UndecodableCell("cell (" + std::to_string(row) + "," + std::to_string(col) +
                                  ") matches no template");
          break;  // lenient: treated as no object
      }
    }
  return scene;  // construction order is already reading order
}

}  // namespace

Scene decode(const Image& image) { return decode_impl(image, false); }

Scene decode_lenient(const Image& image) { return decode_impl(image, true); }

TokenSeq canonical_caption(const Scene& scene) {
  scene.validate();
  const auto& vocab = Vocabulary::builtin();
  TokenSeq out;
  out.vocab_id = vocab.id();
  auto push = [&](std::string_view w) { out.ids.push_back(*vocab.id_of(w)); };
  for (const auto& o : scene.objects) {
    push("a");
    push(color_words()[static_cast<size_t>(o.color)]);
    push(shape_words()[static_cast<size_t>(o.shape)]);
    push("in");
    push("the");
    push(row_words()[static_cast<size_t>(o.row)]);
    push(col_words()[static_cast<size_t>(o.col)]);
    push(".");
  }
  out.ids.push_back(vocab.eos());
  return out;
}

namespace {

template <size_t N>
int word_index(const Vocabulary& vocab, TokenId id, const std::array<const char*, N>& words) {
  for (size_t i = 0; i < N; ++i)
    if (vocab.token(id) == words[i]) return static_cast<int>(i);
  return -1;
}

}  // namespace

std::vector<SceneObject> parse_caption(const TokenSeq& caption) {
  const auto& vocab = Vocabulary::builtin();
  std::vector<SceneObject> specs;
  size_t i = 0;
  const auto& ids = caption.ids;
  auto fail = [&](const std::string& what) -> void {
    throw CaptionParseError("caption parse error at token " + std::to_string(i) + ": " + what);
  };
  while (i < ids.size()) {
    if (ids[i] == vocab.eos()) {
      if (i + 1 != ids.size()) fail("tokens after <eos>");
      break;
    }
    // sentence: a COLOR SHAPE in the ROW COL .
    if (i + 8 > ids.size()) fail("truncated sentence");
    if (vocab.token(ids[i]) != "a") fail("expected 'a'");
    SceneObject o;
    int color = word_index(vocab, ids[i + 1], color_words());
    if (color < 0) fail("expected a color word");
    int shape = word_index(vocab, ids[i + 2], shape_words());
    if (shape < 0) fail("expected a shape word");
    if (vocab.token(ids[i + 3]) != "in") fail("expected 'in'");
    if (vocab.token(ids[i + 4]) != "the") fail("expected 'the'");
    int row = word_index(vocab, ids[i + 5], row_words());
    if (row < 0) fail("expected a row word");
    int col = word_index(vocab, ids[i + 6], col_words());
    if (col < 0) fail("expected a column word");
    if (vocab.token(ids[i + 7]) != ".") fail("expected '.'");
    o.color = static_cast<Color>(color);
    o.shape = static_cast<Shape>(shape);
    o.row = row;
    o.col = col;
    specs.push_back(o);
    i += 8;
  }
  return specs;
}

double alignment_score(const Scene& scene, const TokenSeq& caption) {
  std::vector<SceneObject> specs = parse_caption(caption);
  size_t n_c = specs.size(), n_s = scene.objects.size();
  size_t denom_objects = std::max(n_c, n_s);
  if (denom_objects == 0) return 1.0;
  int matched = 0;
  for (size_t i = 0; i < std::min(n_c, n_s); ++i) {
    const auto& spec = specs[i];
    const auto& obj = scene.objects[i];
    matched += spec.shape == obj.shape;
    matched += spec.color == obj.color;
    matched += spec.row == obj.row;
    matched += spec.col == obj.col;
  }
  return static_cast<double>(matched) / (4.0 * static_cast<double>(denom_objects));
}

Scene corrupt(const Scene& scene, CorruptKind kind, uint64_t seed) {
  scene.validate();
  Rng rng(stream_seed(seed, {static_cast<uint64_t>(kind)}));
  Scene out = scene;
  switch (kind) {
    case CorruptKind::kColor: {
      if (out.objects.empty()) throw NotApplicable("color corruption needs an object");
      auto& o = out.objects[rng.below(out.objects.size())];
      int delta = 1 + static_cast<int>(rng.below(kNumColors - 1));
      o.color = static_cast<Color>((static_cast<int>(o.color) + delta) % kNumColors);
      break;
    }
    case CorruptKind::kShape: {
      if (out.objects.empty()) throw NotApplicable("shape corruption needs an object");
      auto& o = out.objects[rng.below(out.objects.size())];
      int delta = 1 + static_cast<int>(rng.below(kNumShapes - 1));
      o.shape = static_cast<Shape>((static_cast<int>(o.shape) + delta) % kNumShapes);
      break;
    }
    case CorruptKind::kCell: {
      if (out.objects.empty()) throw NotApplicable("cell corruption needs an object");
      size_t idx = rng.below(out.objects.size());
      std::vector<int> free_cells;
      for (int cell = 0; cell < kGridSize * kGridSize; ++cell)
        if (!out.cell_occupied(cell / kGridSize, cell % kGridSize)) free_cells.push_back(cell);
      if (free_cells.empty()) throw NotApplicable("no free cell to move to");
      int cell = free_cells[rng.below(free_cells.size())];
      out.objects[idx].row = cell / kGridSize;
      out.objects[idx].col = cell % kGridSize;
      out.sort_reading_order();
      break;
    }
    case CorruptKind::kDrop: {
      if (out.objects.empty()) throw NotApplicable("drop needs an object");
      out.objects.erase(out.objects.begin() + static_cast<long>(rng.below(out.objects.size())));
      break;
    }
    case CorruptKind::kAdd: {
      if (out.objects.size() >= kMaxObjects) throw NotApplicable("scene already full");
      std::vector<int> free_cells;
      for (int cell = 0; cell < kGridSize * kGridSize; ++cell)
        if (!out.cell_occupied(cell / kGridSize, cell % kGridSize)) free_cells.push_back(cell);
      SceneObject o;
      o.shape = static_cast<Shape>(rng.below(kNumShapes));
      o.color = static_cast<Color>(rng.below(kNumColors));
      int cell = free_cells[rng.below(free_cells.size())];
      o.row = cell / kGridSize;
      o.col = cell % kGridSize;
      out.objects.push_back(o);
      out.sort_reading_order();
      break;
    }
  }
  out.validate();
  if (out == scene) throw ConfigError("corruption produced an identical scene");
  return out;
}

}  // namespace promptecho
