#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "promptecho/image.hpp"
#include "promptecho/rng.hpp"
#include "promptecho/vocab.hpp"

namespace promptecho {

inline constexpr int kGridSize = 3;       // 3x3 grid of cells
inline constexpr int kCellPixels = 16;    // each cell is 16x16
inline constexpr int kSceneImageSize = kGridSize * kCellPixels;  // 48
inline constexpr int kMaxObjects = 4;

inline constexpr int kNumShapes = 3;
inline constexpr int kNumColors = 5;

enum class Shape : int { kCircle = 0, kSquare = 1, kTriangle = 2 };
enum class Color : int { kRed = 0, kGreen = 1, kBlue = 2, kYellow = 3, kPurple = 4 };

const std::array<const char*, kNumShapes>& shape_words();
const std::array<const char*, kNumColors>& color_words();
const std::array<const char*, kGridSize>& row_words();   // top, middle, bottom
const std::array<const char*, kGridSize>& col_words();   // left, center, right

/// Exact fill colors; decoding relies on these being bit-exact.
struct Rgb { uint8_t r, g, b; };
Rgb color_rgb(Color c);

struct SceneObject {
  Shape shape;
  Color color;
  int row = 0;  // 0..2
  int col = 0;  // 0..2

  bool operator==(const SceneObject&) const = default;
};

/// A symbolic scene: at most one object per cell, objects kept in reading
/// order (row-major by cell).
struct Scene {
  std::vector<SceneObject> objects;

  bool operator==(const Scene&) const = default;

  /// Throws ConfigError if the invariants are violated.
  void validate() const;

  /// Re-establishes reading order after edits.
  void sort_reading_order();

  bool cell_occupied(int row, int col) const;
};

std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& json_text);

/// Uniform random valid scene: object count uniform over 0..max_objects,
/// distinct cells, uniform shapes and colors.
Scene random_scene(Rng& rng, int max_objects = kMaxObjects);

/// Draws each object as a fixed binary shape mask filled with the exact
/// color, centered in its cell, on a white background.
Image render(const Scene& scene);

/// Exact inverse of render: per-cell template match over the shape masks
/// and colors. Throws UndecodableCell when a non-empty cell matches no
/// template (possible for external images, never for rendered ones).
Scene decode(const Image& image);

/// Like decode, but undecodable or out-of-format content is treated as
/// "no object". Total function; used by backends that must accept
/// arbitrary pixels.
Scene decode_lenient(const Image& image);

/// Dense caption: one sentence per object in reading order,
/// "a {color} {shape} in the {row-word} {col-word} .", followed by EOS.
TokenSeq canonical_caption(const Scene& scene);

/// Caption parsing under the canonical grammar. A trailing EOS is
/// accepted and ignored. Throws CaptionParseError on any other deviation.
std::vector<SceneObject> parse_caption(const TokenSeq& caption);

/// Ground-truth fraction of caption-asserted facts satisfied by the scene:
/// the i-th parsed spec is matched to the i-th scene object, and the score
/// counts matching slots among shape/color/row/col over 4*max(n_c, n_s).
/// Both empty -> 1. Evaluation-only; never a training reward.
double alignment_score(const Scene& scene, const TokenSeq& caption);

enum class CorruptKind { kColor, kShape, kCell, kDrop, kAdd };

/// Applies exactly one mutation of the given kind; the result is a valid
/// scene different from the input. Throws NotApplicable when the scene
/// cannot support the mutation (e.g. drop on an empty scene).
Scene corrupt(const Scene& scene, CorruptKind kind, uint64_t seed);

}  // namespace promptecho
