#pragma once

// Deterministic synthetic digit-string generator. Glyphs are embedded 7x5
// masks scaled with seeded jitter and placed left to right; per-character
// boxes are recorded before noise. The corpus is a pure function of
// (GenParams, master seed): images as binary PGM, one JSON sidecar per
// sample, one manifest per corpus.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "taofcn/net.hpp"
#include "taofcn/tensor.hpp"

namespace tao {

struct Glyph {
  std::array<const char*, 7> rows;  // '1' = ink
};

// 7x5 masks for '0'-'9', '-', '.', indexed by class id.
inline const std::array<Glyph, 12>& glyph_set() {
  static const std::array<Glyph, 12> g = {{
      {{"01110", "10001", "10011", "10101", "11001", "10001", "01110"}},  // 0
      {{"00100", "01100", "00100", "00100", "00100", "00100", "01110"}},  // 1
      {{"01110", "10001", "00001", "00010", "00100", "01000", "11111"}},  // 2
      {{"11111", "00010", "00100", "00010", "00001", "10001", "01110"}},  // 3
      {{"00010", "00110", "01010", "10010", "11111", "00010", "00010"}},  // 4
      {{"11111", "10000", "11110", "00001", "00001", "10001", "01110"}},  // 5
      {{"00110", "01000", "10000", "11110", "10001", "10001", "01110"}},  // 6
      {{"11111", "00001", "00010", "00100", "01000", "01000", "01000"}},  // 7
      {{"01110", "10001", "10001", "01110", "10001", "10001", "01110"}},  // 8
      {{"01110", "10001", "10001", "01111", "00001", "00010", "01100"}},  // 9
      {{"00000", "00000", "00000", "11111", "00000", "00000", "00000"}},  // -
      {{"00000", "00000", "00000", "00000", "00000", "01100", "01100"}},  // .
  }};
  return g;
}

inline int class_id_of(char c) {
  const char* p = std::strchr(kClasses, c);
  if (!p || c == '\0') throw std::invalid_argument(std::string("unknown character: ") + c);
  return static_cast<int>(p - kClasses);
}

// Characters are drawn close to full image height: the decoder averages
// probabilities over each column, so a glyph must cover most of its columns'
// rows to outweigh the background mass.
struct GenParams {
  int height = 32;
  int min_len = 3, max_len = 8;
  double scale_min = 2.9, scale_max = 3.5;
  int vjitter = 3;
  int gap_min = 1, gap_max = 5;
  double touch_frac = 0.1;   // fraction of adjacent pairs rendered touching
  double noise_p = 0.01;     // per-pixel salt-and-pepper flip probability
  int margin = 4;
  std::uint64_t master_seed = 1;
};

inline void to_json(nlohmann::json& j, const GenParams& p) {
  j = {{"height", p.height},       {"min_len", p.min_len},
       {"max_len", p.max_len},     {"scale_min", p.scale_min},
       {"scale_max", p.scale_max}, {"vjitter", p.vjitter},
       {"gap_min", p.gap_min},     {"gap_max", p.gap_max},
       {"touch_frac", p.touch_frac}, {"noise_p", p.noise_p},
       {"margin", p.margin},       {"master_seed", p.master_seed}};
}
inline void from_json(const nlohmann::json& j, GenParams& p) {
  j.at("height").get_to(p.height);
  j.at("min_len").get_to(p.min_len);
  j.at("max_len").get_to(p.max_len);
  j.at("scale_min").get_to(p.scale_min);
  j.at("scale_max").get_to(p.scale_max);
  j.at("vjitter").get_to(p.vjitter);
  j.at("gap_min").get_to(p.gap_min);
  j.at("gap_max").get_to(p.gap_max);
  j.at("touch_frac").get_to(p.touch_frac);
  j.at("noise_p").get_to(p.noise_p);
  j.at("margin").get_to(p.margin);
  j.at("master_seed").get_to(p.master_seed);
}

struct StringSample {
  std::string id;
  Tensor image;  // 1 x H x W, values in [0, 1], 0 = background
  std::vector<Box> boxes;
  std::string transcript;
  std::uint64_t seed = 0;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline StringSample render_string(const std::string& transcript,
                                  const GenParams& params, std::uint64_t seed) {
  for (char c : transcript) class_id_of(c);  // reject unknown characters
  std::mt19937_64 rng(seed);
  const int n = static_cast<int>(transcript.size());

  struct Placement {
    double scale;
    int gw, gh, voff, gap;
  };
  std::vector<Placement> plan(n);
  std::uniform_real_distribution<double> sdist(params.scale_min, params.scale_max);
  std::uniform_int_distribution<int> vdist(-params.vjitter, params.vjitter);
  std::uniform_int_distribution<int> gdist(params.gap_min, params.gap_max);
  std::uniform_int_distribution<int> tdist(-1, 0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    Placement& pl = plan[i];
    pl.scale = sdist(rng);
    pl.gw = std::max(2, static_cast<int>(std::lround(5 * pl.scale)));
    pl.gh = std::max(3, static_cast<int>(std::lround(7 * pl.scale)));
    pl.voff = vdist(rng);
    pl.gap = i == 0 ? 0
             : (u01(rng) < params.touch_frac ? tdist(rng) : gdist(rng));
  }

  int width = 2 * params.margin;
  for (int i = 0; i < n; ++i) width += plan[i].gap + plan[i].gw;
  width = std::max(width, 16);

  StringSample s;
  s.transcript = transcript;
  s.seed = seed;
  s.image = Tensor(1, params.height, width, 0.0f);

  int cursor = params.margin;
  for (int i = 0; i < n; ++i) {
    const Placement& pl = plan[i];
    cursor += pl.gap;
    const Glyph& glyph = glyph_set()[class_id_of(transcript[i])];
    const int top = std::clamp((params.height - pl.gh) / 2 + pl.voff, 0,
                               params.height - pl.gh);
    Box box{width, params.height, -1, -1};
    for (int y = 0; y < pl.gh; ++y) {
      const int sy = std::min(6, static_cast<int>(y / pl.scale));
      for (int x = 0; x < pl.gw; ++x) {
        const int sx = std::min(4, static_cast<int>(x / pl.scale));
        if (glyph.rows[sy][sx] != '1') continue;
        const int iy = top + y, ix = cursor + x;
        if (iy < 0 || iy >= params.height || ix < 0 || ix >= width) continue;
        s.image.at(0, iy, ix) = 1.0f;
        box.x0 = std::min(box.x0, ix);
        box.y0 = std::min(box.y0, iy);
        box.x1 = std::max(box.x1, ix);
        box.y1 = std::max(box.y1, iy);
      }
    }
    if (box.x1 < 0) box = Box{cursor, top, cursor, top};  // blank glyph guard
    s.boxes.push_back(box);
    cursor += pl.gw;
  }

  if (params.noise_p > 0) {
    for (float& v : s.image.data)
      if (u01(rng) < params.noise_p) v = 1.0f - v;
  }
  return s;
}

// ---------------------------------------------------------------------------
// PGM + JSON sidecar I/O

inline void save_pgm(const std::string& path, const Tensor& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write image: " + path);
  out << "P5\n" << image.width << " " << image.height << "\n255\n";
  for (float v : image.data) {
    const int g = std::clamp(static_cast<int>(std::lround(v * 255.0f)), 0, 255);
    out.put(static_cast<char>(g));
  }
  if (!out) throw std::runtime_error("image write failed: " + path);
}

inline Tensor load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image: " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || w <= 0 || h <= 0 || maxval != 255)
    throw std::runtime_error("malformed PGM header at byte offset " +
                             std::to_string(in.tellg()) + ": " + path);
  in.get();  // single whitespace after maxval
  std::vector<char> raw(static_cast<std::size_t>(w) * h);
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw std::runtime_error("truncated PGM at byte offset " +
                             std::to_string(in.tellg()) + ": " + path);
  Tensor t(1, h, w);
  for (std::size_t i = 0; i < raw.size(); ++i)
    t.data[i] = static_cast<unsigned char>(raw[i]) / 255.0f;
  return t;
}

inline void save_sample(const std::string& image_path,
                        const std::string& sidecar_path, const StringSample& s) {
  save_pgm(image_path, s.image);
  nlohmann::json boxes = nlohmann::json::array();
  for (const auto& b : s.boxes) boxes.push_back({b.x0, b.y0, b.x1, b.y1});
  nlohmann::json j = {{"id", s.id},
                      {"transcript", s.transcript},
                      {"seed", s.seed},
                      {"boxes", boxes}};
  std::ofstream out(sidecar_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write sidecar: " + sidecar_path);
  out << j.dump(2) << "\n";
}

inline StringSample load_sample(const std::string& image_path,
                                const std::string& sidecar_path) {
  StringSample s;
  s.image = load_pgm(image_path);
  std::ifstream in(sidecar_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open sidecar: " + sidecar_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("malformed sidecar at byte offset " +
                             std::to_string(e.byte) + ": " + sidecar_path);
  }
  s.id = j.at("id").get<std::string>();
  s.transcript = j.at("transcript").get<std::string>();
  s.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& jb : j.at("boxes"))
    s.boxes.push_back(Box{jb.at(0).get<int>(), jb.at(1).get<int>(),
                          jb.at(2).get<int>(), jb.at(3).get<int>()});
  if (s.boxes.size() != s.transcript.size())
    throw std::runtime_error("sidecar box/transcript mismatch: " + sidecar_path);
  return s;
}

// ---------------------------------------------------------------------------
// Corpus generation and loading

// Mostly digits; '-' and '.' are kept rare because their few ink rows cannot
// outweigh the background mass in a column average, so strings heavy in them
// are undecodable by construction.
inline std::string sample_transcript(std::mt19937_64& rng, const GenParams& p) {
  std::uniform_int_distribution<int> ldist(p.min_len, p.max_len);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> ddist(0, 9);
  const int len = ldist(rng);
  std::string t;
  for (int i = 0; i < len; ++i) {
    const double u = u01(rng);
    if (u < 0.96)
      t += static_cast<char>('0' + ddist(rng));
    else if (u < 0.98)
      t += '-';
    else
      t += '.';
  }
  return t;
}

inline void generate_dataset(const std::string& out_dir, int n_train, int n_test,
                             const GenParams& params) {
  namespace fs = std::filesystem;
  if (n_train < 0 || n_test < 0)
    throw std::invalid_argument("generate_dataset: negative count");
  fs::create_directories(fs::path(out_dir) / "train");
  fs::create_directories(fs::path(out_dir) / "test");
  nlohmann::json entries = nlohmann::json::array();
  auto emit = [&](const std::string& split, int index, std::uint64_t salt) {
    const std::uint64_t seed =
        splitmix64(params.master_seed ^ (salt + static_cast<std::uint64_t>(index)));
    std::mt19937_64 trng(seed);
    const std::string transcript = sample_transcript(trng, params);
    StringSample s = render_string(transcript, params, splitmix64(seed));
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d", index);
    s.id = split + "/" + buf;
    const std::string img = split + "/" + buf + ".pgm";
    const std::string sc = split + "/" + buf + ".json";
    save_sample((fs::path(out_dir) / img).string(), (fs::path(out_dir) / sc).string(), s);
    entries.push_back({{"id", s.id}, {"split", split},
                       {"image_path", img}, {"sidecar_path", sc}});
  };
  for (int i = 0; i < n_train; ++i) emit("train", i, 0x7261696eull);
  for (int i = 0; i < n_test; ++i) emit("test", i, 0x74657374ull);
  nlohmann::json manifest = {{"version", 1}, {"params", params}, {"entries", entries}};
  std::ofstream out((fs::path(out_dir) / "manifest.json").string(), std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest in " + out_dir);
  out << manifest.dump(2) << "\n";
}

inline std::vector<StringSample> load_dataset(const std::string& dir,
                                              const std::string& split) {
  namespace fs = std::filesystem;
  const std::string mpath = (fs::path(dir) / "manifest.json").string();
  std::ifstream in(mpath, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open manifest: " + mpath);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("malformed manifest at byte offset " +
                             std::to_string(e.byte) + ": " + mpath);
  }
  std::vector<StringSample> samples;
  for (const auto& e : manifest.at("entries")) {
    if (e.at("split").get<std::string>() != split) continue;
    const std::string img = (fs::path(dir) / e.at("image_path").get<std::string>()).string();
    const std::string sc = (fs::path(dir) / e.at("sidecar_path").get<std::string>()).string();
    if (!fs::exists(img) || !fs::exists(sc))
      throw std::runtime_error("manifest entry missing on disk: " +
                               e.at("id").get<std::string>());
    samples.push_back(load_sample(img, sc));
  }
  return samples;
}

}  // namespace tao
