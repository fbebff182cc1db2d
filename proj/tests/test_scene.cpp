#include <set>
#include <sstream>

#include "doctest.h"
#include "promptecho/errors.hpp"
#include "promptecho/rng.hpp"
#include "promptecho/scene.hpp"

using namespace promptecho;

namespace {

Scene one_red_circle_top_left() {
  Scene s;
  s.objects.push_back({Shape::kCircle, Color::kRed, 0, 0});
  return s;
}

/// Independent caption formatter used to cross-check canonical_caption.
std::string format_caption(const Scene& scene) {
  std::ostringstream out;
  for (const auto& o : scene.objects) {
    out << "a " << color_words()[static_cast<size_t>(o.color)] << " "
        << shape_words()[static_cast<size_t>(o.shape)] << " in the "
        << row_words()[static_cast<size_t>(o.row)] << " "
        << col_words()[static_cast<size_t>(o.col)] << " . ";
  }
  out << "<eos>";
  return out.str();
}

}  // namespace

TEST_CASE("render empty scene is all white") {
  Image img = render(Scene{});
  CHECK(img.width == kSceneImageSize);
  CHECK(img.height == kSceneImageSize);
  for (uint8_t b : img.pixels) CHECK(b == 255);
}

TEST_CASE("render draws exact color inside the object's cell only") {
  Image img = render(one_red_circle_top_left());
  bool any_red = false;
  for (int y = 0; y < kSceneImageSize; ++y)
    for (int x = 0; x < kSceneImageSize; ++x) {
      const uint8_t* p = img.at(x, y);
      bool white = p[0] == 255 && p[1] == 255 && p[2] == 255;
      bool red = p[0] == 255 && p[1] == 0 && p[2] == 0;
      CHECK((white || red));
      if (red) {
        any_red = true;
        CHECK(x < kCellPixels);
        CHECK(y < kCellPixels);
      }
    }
  CHECK(any_red);
}

TEST_CASE("decode(render(S)) is the identity over 500 random scenes") {
  Rng rng(20260810);
  for (int i = 0; i < 500; ++i) {
    Scene s = random_scene(rng);
    CHECK(decode(render(s)) == s);
  }
}

TEST_CASE("all-white image decodes to the empty scene") {
  Image img(kSceneImageSize, kSceneImageSize, 255);
  CHECK(decode(img).objects.empty());
}

TEST_CASE("half-corrupted cell raises UndecodableCell; lenient decode drops it") {
  Scene s = one_red_circle_top_left();
  Image img = render(s);
  // overwrite half of cell (0,0) with an out-of-palette color
  for (int y = 0; y < kCellPixels / 2; ++y)
    for (int x = 0; x < kCellPixels; ++x) img.set(x, y, 13, 77, 200);
  CHECK_THROWS_AS(decode(img), UndecodableCell);
  CHECK(decode_lenient(img).objects.empty());
}

TEST_CASE("decode_lenient treats out-of-format images as empty") {
  Image img(7, 9, 0);
  CHECK(decode_lenient(img).objects.empty());
  CHECK_THROWS_AS(decode(img), UndecodableCell);
}

TEST_CASE("canonical captions") {
  const auto& v = Vocabulary::builtin();
  SUBCASE("empty scene is just <eos>") {
    TokenSeq c = canonical_caption(Scene{});
    REQUIRE(c.size() == 1);
    CHECK(c.ids[0] == v.eos());
  }
  SUBCASE("single object") {
    CHECK(v.detokenize(canonical_caption(one_red_circle_top_left())) ==
          "a red circle in the top left . <eos>");
  }
  SUBCASE("matches an independent formatter over random scenes") {
    Rng rng(7);
    for (int i = 0; i < 200; ++i) {
      Scene s = random_scene(rng);
      CHECK(v.detokenize(canonical_caption(s)) == format_caption(s));
    }
  }
  SUBCASE("two objects come out in reading order") {
    Scene s;
    s.objects.push_back({Shape::kSquare, Color::kBlue, 2, 1});
    s.objects.push_back({Shape::kCircle, Color::kRed, 0, 2});
    s.sort_reading_order();
    CHECK(v.detokenize(canonical_caption(s)) ==
          "a red circle in the top right . a blue square in the bottom center . <eos>");
  }
}

TEST_CASE("caption grammar closure: canonical captions always reparse") {
  Rng rng(11);
  for (int i = 0; i < 300; ++i) {
    Scene s = random_scene(rng);
    auto specs = parse_caption(canonical_caption(s));  // must not throw
    CHECK(specs.size() == s.objects.size());
  }
}

TEST_CASE("caption parse errors") {
  const auto& v = Vocabulary::builtin();
  CHECK_THROWS_AS(parse_caption(v.tokenize("red circle in the top left .")), CaptionParseError);
  CHECK_THROWS_AS(parse_caption(v.tokenize("a red circle in the top left")), CaptionParseError);
  CHECK_THROWS_AS(parse_caption(v.tokenize("a red red in the top left .")), CaptionParseError);
  CHECK_THROWS_AS(parse_caption(v.tokenize("<eos> a red circle in the top left .")),
                  CaptionParseError);
}

TEST_CASE("alignment score") {
  const auto& v = Vocabulary::builtin();
  Scene s = one_red_circle_top_left();
  SUBCASE("perfect match is 1.0") {
    CHECK(alignment_score(s, canonical_caption(s)) == 1.0);
  }
  SUBCASE("empty scene vs described object is 0.0") {
    CHECK(alignment_score(Scene{}, canonical_caption(s)) == 0.0);
  }
  SUBCASE("both empty is 1.0") {
    CHECK(alignment_score(Scene{}, canonical_caption(Scene{})) == 1.0);
  }
  SUBCASE("one wrong slot out of four") {
    TokenSeq caption = v.tokenize("a blue circle in the top left .");
    CHECK(alignment_score(s, caption) == 0.75);
  }
  SUBCASE("caption/score consistency over random scenes") {
    Rng rng(23);
    for (int i = 0; i < 200; ++i) {
      Scene scene = random_scene(rng);
      CHECK(alignment_score(scene, canonical_caption(scene)) == 1.0);
    }
  }
}

TEST_CASE("corrupt produces a valid different scene of the requested kind") {
  Scene s = one_red_circle_top_left();
  SUBCASE("color") {
    Scene c = corrupt(s, CorruptKind::kColor, 5);
    CHECK(c.objects.size() == 1);
    CHECK(c.objects[0].color != Color::kRed);
    CHECK(c.objects[0].shape == Shape::kCircle);
  }
  SUBCASE("drop on empty is NotApplicable") {
    CHECK_THROWS_AS(corrupt(Scene{}, CorruptKind::kDrop, 1), NotApplicable);
  }
  SUBCASE("add on a full scene is NotApplicable") {
    Rng rng(3);
    Scene full;
    while (full.objects.size() < kMaxObjects) full = random_scene(rng);
    CHECK_THROWS_AS(corrupt(full, CorruptKind::kAdd, 1), NotApplicable);
  }
  SUBCASE("every successful corruption strictly lowers alignment") {
    Rng rng(31);
    int done = 0;
    uint64_t seed = 0;
    while (done < 200) {
      Scene scene = random_scene(rng);
      auto kind = static_cast<CorruptKind>(rng.below(5));
      ++seed;
      try {
        Scene bad = corrupt(scene, kind, seed);
        TokenSeq caption = canonical_caption(scene);
        CHECK(alignment_score(bad, caption) < alignment_score(scene, caption));
        ++done;
      } catch (const NotApplicable&) {
        // resample
      }
    }
  }
}

TEST_CASE("scene JSON round trip") {
  Rng rng(13);
  for (int i = 0; i < 50; ++i) {
    Scene s = random_scene(rng);
    CHECK(scene_from_json(scene_to_json(s)) == s);
  }
}

TEST_CASE("scene invariants are enforced") {
  Scene two_in_one_cell;
  two_in_one_cell.objects.push_back({Shape::kCircle, Color::kRed, 1, 1});
  two_in_one_cell.objects.push_back({Shape::kSquare, Color::kBlue, 1, 1});
  CHECK_THROWS_AS(two_in_one_cell.validate(), ConfigError);
}
