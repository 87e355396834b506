#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "taofcn/dataset.hpp"

using namespace tao;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("taofcn_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("render_string basics") {
  GenParams p;
  p.noise_p = 0.0;
  SUBCASE("empty transcript renders a blank image with no boxes") {
    const StringSample s = render_string("", p, 7);
    CHECK(s.boxes.empty());
    CHECK(s.transcript == "");
    CHECK(s.image.height == p.height);
    CHECK(s.image.width >= 16);
    for (float v : s.image.data) CHECK(v == 0.0f);
  }
  SUBCASE("boxes tightly bound the ink") {
    const StringSample s = render_string("305", p, 11);
    REQUIRE(s.boxes.size() == 3);
    for (const Box& b : s.boxes) {
      CHECK(b.x0 <= b.x1);
      CHECK(b.y0 <= b.y1);
      // ink on every edge of the box: tight bound
      bool left = false, right = false, top = false, bottom = false;
      for (int y = b.y0; y <= b.y1; ++y) {
        left = left || s.image.at(0, y, b.x0) == 1.0f;
        right = right || s.image.at(0, y, b.x1) == 1.0f;
      }
      for (int x = b.x0; x <= b.x1; ++x) {
        top = top || s.image.at(0, b.y0, x) == 1.0f;
        bottom = bottom || s.image.at(0, b.y1, x) == 1.0f;
      }
      CHECK(left);
      CHECK(right);
      CHECK(top);
      CHECK(bottom);
    }
  }
  SUBCASE("no ink outside the union of boxes when noise is off") {
    const StringSample s = render_string("1.8-2", p, 13);
    for (int y = 0; y < s.image.height; ++y)
      for (int x = 0; x < s.image.width; ++x) {
        if (s.image.at(0, y, x) == 0.0f) continue;
        bool inside = false;
        for (const Box& b : s.boxes)
          inside = inside || (x >= b.x0 && x <= b.x1 && y >= b.y0 && y <= b.y1);
        CHECK(inside);
      }
  }
  SUBCASE("same seed reproduces the sample bit for bit") {
    const StringSample a = render_string("0123456789-.", p, 99);
    const StringSample b = render_string("0123456789-.", p, 99);
    CHECK(a.image.data == b.image.data);
    REQUIRE(a.boxes.size() == b.boxes.size());
    for (std::size_t i = 0; i < a.boxes.size(); ++i) {
      CHECK(a.boxes[i].x0 == b.boxes[i].x0);
      CHECK(a.boxes[i].y1 == b.boxes[i].y1);
    }
  }
  SUBCASE("unknown characters are rejected") {
    CHECK_THROWS_AS(render_string("12x", p, 1), std::invalid_argument);
  }
}

TEST_CASE("class inventory coverage over a large transcript sample") {
  GenParams p;
  std::mt19937_64 rng(42);
  std::map<char, int> counts;
  for (int i = 0; i < 1000; ++i)
    for (char c : sample_transcript(rng, p)) counts[c] += 1;
  for (const char* c = kClasses; *c; ++c) {
    INFO("class ", *c);
    CHECK(counts[*c] >= 20);
  }
}

TEST_CASE("PGM round-trip") {
  const fs::path dir = temp_dir("pgm");
  GenParams p;
  const StringSample s = render_string("42", p, 5);
  const std::string path = (dir / "x.pgm").string();
  save_pgm(path, s.image);
  const Tensor back = load_pgm(path);
  CHECK(back.height == s.image.height);
  CHECK(back.width == s.image.width);
  CHECK(back.data == s.image.data);  // binary image: 0/255 is exact

  SUBCASE("truncated file reports the byte offset") {
    const auto bytes = slurp(path);
    std::ofstream out(dir / "trunc.pgm", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    CHECK_THROWS_WITH_AS(load_pgm((dir / "trunc.pgm").string()),
                         doctest::Contains("byte offset"), std::runtime_error);
  }
  SUBCASE("bad magic is rejected") {
    std::ofstream out(dir / "bad.pgm", std::ios::binary);
    out << "P2\n4 4\n255\n";
    out.close();
    CHECK_THROWS_AS(load_pgm((dir / "bad.pgm").string()), std::runtime_error);
  }
}

TEST_CASE("sample sidecar round-trip") {
  const fs::path dir = temp_dir("sidecar");
  GenParams p;
  StringSample s = render_string("3-1", p, 21);
  s.id = "train/000007";
  const std::string img = (dir / "s.pgm").string();
  const std::string sc = (dir / "s.json").string();
  save_sample(img, sc, s);
  const StringSample back = load_sample(img, sc);
  CHECK(back.id == s.id);
  CHECK(back.transcript == s.transcript);
  CHECK(back.seed == s.seed);
  CHECK(back.image.data == s.image.data);
  REQUIRE(back.boxes.size() == s.boxes.size());
  for (std::size_t i = 0; i < s.boxes.size(); ++i) {
    CHECK(back.boxes[i].x0 == s.boxes[i].x0);
    CHECK(back.boxes[i].y0 == s.boxes[i].y0);
    CHECK(back.boxes[i].x1 == s.boxes[i].x1);
    CHECK(back.boxes[i].y1 == s.boxes[i].y1);
  }
  SUBCASE("malformed sidecar reports the byte offset") {
    std::ofstream out(dir / "bad.json");
    out << "{\"id\": \"x\", ";
    out.close();
    CHECK_THROWS_WITH_AS(load_sample(img, (dir / "bad.json").string()),
                         doctest::Contains("byte offset"), std::runtime_error);
  }
}

TEST_CASE("corpus generation") {
  const fs::path a = temp_dir("corpus_a");
  GenParams p;
  p.master_seed = 777;
  generate_dataset(a.string(), 6, 3, p);

  SUBCASE("manifest lists every file and splits load separately") {
    const auto train = load_dataset(a.string(), "train");
    const auto test = load_dataset(a.string(), "test");
    CHECK(train.size() == 6);
    CHECK(test.size() == 3);
    for (const auto& s : train) {
      CHECK(!s.transcript.empty());
      CHECK(s.boxes.size() == s.transcript.size());
    }
  }
  SUBCASE("regeneration with the same seed is byte-identical") {
    const fs::path b = temp_dir("corpus_b");
    generate_dataset(b.string(), 6, 3, p);
    for (const auto& entry : fs::recursive_directory_iterator(a)) {
      if (!entry.is_regular_file()) continue;
      const fs::path rel = fs::relative(entry.path(), a);
      INFO(rel.string());
      CHECK(slurp(entry.path()) == slurp(b / rel));
    }
  }
  SUBCASE("a different seed changes the corpus") {
    const fs::path c = temp_dir("corpus_c");
    GenParams q = p;
    q.master_seed = 778;
    generate_dataset(c.string(), 6, 3, q);
    CHECK(slurp(a / "train" / "000000.pgm") != slurp(c / "train" / "000000.pgm"));
  }
  SUBCASE("a missing file behind a manifest entry is an error") {
    fs::remove(a / "train" / "000002.pgm");
    CHECK_THROWS_WITH_AS(load_dataset(a.string(), "train"),
                         doctest::Contains("missing on disk"), std::runtime_error);
  }
  SUBCASE("a missing manifest is an error") {
    CHECK_THROWS_AS(load_dataset((a / "nowhere").string(), "train"),
                    std::runtime_error);
  }
}
