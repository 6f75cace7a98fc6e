// Copyright 2026 The splitfed Authors
// SPDX-License-Identifier: Apache-2.0
#include "splitfed/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "splitfed/error.hpp"

namespace splitfed {

namespace {

struct Geometry {
  double cx, cy;      // ellipse center (pixels)
  double rx, ry;      // outer radii
  double zp_frac;     // ZP band thickness as fraction of outer radius
  double te_frac;     // TE band thickness
  double icm_x, icm_y, icm_rx, icm_ry;
};

Geometry draw_geometry(int size, Rng& rng, int attempt) {
  Geometry g;
  const double s = static_cast<double>(size);
  // Later attempts widen the bands so tiny images still get all classes.
  const double widen = 1.0 + 0.15 * attempt;
  g.cx = s * (0.5 + 0.08 * (rng.next_double() - 0.5));
  g.cy = s * (0.5 + 0.08 * (rng.next_double() - 0.5));
  g.rx = s * (0.36 + 0.08 * rng.next_double());
  g.ry = s * (0.36 + 0.08 * rng.next_double());
  g.zp_frac = std::min(0.30, (0.12 + 0.06 * rng.next_double()) * widen);
  g.te_frac = std::min(0.30, (0.12 + 0.06 * rng.next_double()) * widen);

  const double interior = 1.0 - g.zp_frac - g.te_frac;
  const double icm_frac = 0.30 + 0.15 * rng.next_double();
  g.icm_rx = std::max(1.6, icm_frac * interior * g.rx);
  g.icm_ry = std::max(1.6, icm_frac * interior * g.ry);
  // Offset the ICM inside the interior so some BL fluid remains visible.
  const double max_off_x = std::max(0.0, interior * g.rx - g.icm_rx);
  const double max_off_y = std::max(0.0, interior * g.ry - g.icm_ry);
  g.icm_x = g.cx + 0.8 * max_off_x * (2.0 * rng.next_double() - 1.0);
  g.icm_y = g.cy + 0.8 * max_off_y * (2.0 * rng.next_double() - 1.0);
  return g;
}

void rasterize(const Geometry& g, int size, ClassMask* mask) {
  mask->h = size;
  mask->w = size;
  mask->values.assign(static_cast<std::size_t>(size) * size, 0);
  const double interior = 1.0 - g.zp_frac - g.te_frac;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      const double dx = (px - g.cx) / g.rx, dy = (py - g.cy) / g.ry;
      const double rho = std::sqrt(dx * dx + dy * dy);
      std::uint8_t cls = 0;
      if (rho <= 1.0) {
        if (rho > 1.0 - g.zp_frac) {
          cls = 1;
        } else if (rho > interior) {
          cls = 2;
        } else {
          const double ix = (px - g.icm_x) / g.icm_rx;
          const double iy = (py - g.icm_y) / g.icm_ry;
          cls = (ix * ix + iy * iy <= 1.0) ? 3 : 4;
        }
      }
      mask->values[static_cast<std::size_t>(y) * size + x] = cls;
    }
  }
}

bool all_classes_present(const ClassMask& mask) {
  bool seen[kNumClasses] = {};
  for (std::uint8_t v : mask.values) seen[v] = true;
  for (bool s : seen) {
    if (!s) return false;
  }
  return true;
}

// Last-resort repair for very small images: paint missing classes near the
// natural location so the all-classes guarantee is unconditional.
void force_classes(const Geometry& g, int size, ClassMask* mask) {
  bool seen[kNumClasses] = {};
  for (std::uint8_t v : mask->values) seen[v] = true;
  auto put = [&](double px, double py, std::uint8_t cls) {
    const int x = std::clamp(static_cast<int>(px), 0, size - 1);
    const int y = std::clamp(static_cast<int>(py), 0, size - 1);
    mask->values[static_cast<std::size_t>(y) * size + x] = cls;
  };
  if (!seen[0]) put(0, 0, 0);
  if (!seen[1]) put(g.cx + g.rx * (1.0 - 0.5 * g.zp_frac), g.cy, 1);
  if (!seen[2]) {
    put(g.cx + g.rx * (1.0 - g.zp_frac - 0.5 * g.te_frac), g.cy, 2);
  }
  if (!seen[3]) put(g.icm_x, g.icm_y, 3);
  if (!seen[4]) put(g.cx, g.cy, 4);
}

constexpr float kClassIntensity[kNumClasses] = {0.12f, 0.85f, 0.50f, 0.72f,
                                                0.28f};

}  // namespace

Sample generate_sample(int size, std::uint64_t seed, int index) {
  if (size < 2 || size % 2 != 0) {
    fail(ErrorKind::InvalidArgument,
         "generate_sample: size must be even and >= 2, got " +
             std::to_string(size));
  }
  Rng rng(Rng::fold(seed, static_cast<std::uint64_t>(index)));

  Sample sample;
  sample.h = sample.w = size;
  Geometry geom{};
  for (int attempt = 0; attempt < 8; ++attempt) {
    geom = draw_geometry(size, rng, attempt);
    rasterize(geom, size, &sample.mask);
    if (all_classes_present(sample.mask)) break;
  }
  if (!all_classes_present(sample.mask)) {
    force_classes(geom, size, &sample.mask);
  }

  float band[kNumClasses];
  for (int c = 0; c < kNumClasses; ++c) {
    band[c] = kClassIntensity[c] +
              0.04f * static_cast<float>(2.0 * rng.next_double() - 1.0);
  }
  sample.image.resize(sample.mask.values.size());
  for (std::size_t i = 0; i < sample.image.size(); ++i) {
    const float v = band[sample.mask.values[i]] +
                    0.05f * static_cast<float>(rng.next_gaussian());
    sample.image[i] = std::clamp(v, 0.0f, 1.0f);
  }
  return sample;
}

Dataset generate_dataset(int n, int size, std::uint64_t seed) {
  if (n < 1) {
    fail(ErrorKind::InvalidArgument, "generate_dataset: n must be >= 1");
  }
  Dataset ds;
  ds.samples.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    ds.samples.push_back(generate_sample(size, seed, i));
  }
  return ds;
}

namespace {

Sample flip(const Sample& s, bool horizontal) {
  Sample out = s;
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      const int sx = horizontal ? s.w - 1 - x : x;
      const int sy = horizontal ? y : s.h - 1 - y;
      out.image[static_cast<std::size_t>(y) * s.w + x] =
          s.image[static_cast<std::size_t>(sy) * s.w + sx];
      out.mask.values[static_cast<std::size_t>(y) * s.w + x] =
          s.mask.values[static_cast<std::size_t>(sy) * s.w + sx];
    }
  }
  return out;
}

}  // namespace

Sample flip_horizontal(const Sample& sample) { return flip(sample, true); }
Sample flip_vertical(const Sample& sample) { return flip(sample, false); }

Sample resize_sample(const Sample& s, int target_size) {
  if (s.h == target_size && s.w == target_size) return s;
  Sample out;
  out.h = out.w = target_size;
  out.image.resize(static_cast<std::size_t>(target_size) * target_size);
  out.mask.h = out.mask.w = target_size;
  out.mask.values.resize(out.image.size());
  const double sy_scale = static_cast<double>(s.h) / target_size;
  const double sx_scale = static_cast<double>(s.w) / target_size;
  for (int y = 0; y < target_size; ++y) {
    for (int x = 0; x < target_size; ++x) {
      const double src_y = (y + 0.5) * sy_scale - 0.5;
      const double src_x = (x + 0.5) * sx_scale - 0.5;
      // Nearest neighbour for the mask.
      const int ny = std::clamp(static_cast<int>(std::lround(src_y)), 0, s.h - 1);
      const int nx = std::clamp(static_cast<int>(std::lround(src_x)), 0, s.w - 1);
      out.mask.values[static_cast<std::size_t>(y) * target_size + x] =
          s.mask.values[static_cast<std::size_t>(ny) * s.w + nx];
      // Bilinear for the image.
      const int y0 = std::clamp(static_cast<int>(std::floor(src_y)), 0, s.h - 1);
      const int x0 = std::clamp(static_cast<int>(std::floor(src_x)), 0, s.w - 1);
      const int y1 = std::min(y0 + 1, s.h - 1);
      const int x1 = std::min(x0 + 1, s.w - 1);
      const double fy = std::clamp(src_y - y0, 0.0, 1.0);
      const double fx = std::clamp(src_x - x0, 0.0, 1.0);
      const double v00 = s.image[static_cast<std::size_t>(y0) * s.w + x0];
      const double v01 = s.image[static_cast<std::size_t>(y0) * s.w + x1];
      const double v10 = s.image[static_cast<std::size_t>(y1) * s.w + x0];
      const double v11 = s.image[static_cast<std::size_t>(y1) * s.w + x1];
      const double v = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                       fy * ((1 - fx) * v10 + fx * v11);
      out.image[static_cast<std::size_t>(y) * target_size + x] =
          static_cast<float>(v);
    }
  }
  return out;
}

Sample augment(const Sample& sample, Rng& rng, int target_size) {
  Sample out = sample;
  if (rng.next_double() < 0.5) out = flip_horizontal(out);
  if (rng.next_double() < 0.5) out = flip_vertical(out);
  return resize_sample(out, target_size);
}

// ---------------------------------------------------------------------------
// PGM I/O

namespace {

[[noreturn]] void parse_fail(const std::string& path, std::size_t offset,
                             const std::string& message) {
  fail(ErrorKind::Parse,
       path + ": " + message + " (byte offset " + std::to_string(offset) + ")");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Skips whitespace and '#' comments; returns false at end of input.
bool skip_space(const std::string& buf, std::size_t* pos) {
  while (*pos < buf.size()) {
    const char c = buf[*pos];
    if (c == '#') {
      while (*pos < buf.size() && buf[*pos] != '\n') ++(*pos);
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      ++(*pos);
    } else {
      return true;
    }
  }
  return false;
}

int parse_int(const std::string& buf, std::size_t* pos,
              const std::string& path) {
  if (!skip_space(buf, pos)) {
    parse_fail(path, *pos, "unexpected end of header");
  }
  if (!std::isdigit(static_cast<unsigned char>(buf[*pos]))) {
    parse_fail(path, *pos, "expected integer in header");
  }
  long v = 0;
  while (*pos < buf.size() &&
         std::isdigit(static_cast<unsigned char>(buf[*pos]))) {
    v = v * 10 + (buf[*pos] - '0');
    if (v > 1 << 30) parse_fail(path, *pos, "header integer too large");
    ++(*pos);
  }
  return static_cast<int>(v);
}

}  // namespace

void write_pgm(const std::string& path, const Pgm& pgm) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path);
  out << "P5\n" << pgm.w << " " << pgm.h << "\n" << pgm.maxval << "\n";
  out.write(reinterpret_cast<const char*>(pgm.data.data()),
            static_cast<std::streamsize>(pgm.data.size()));
  if (!out) fail(ErrorKind::Io, "short write to " + path);
}

Pgm read_pgm(const std::string& path) {
  const std::string buf = read_file(path);
  std::size_t pos = 0;
  if (buf.size() < 2 || buf[0] != 'P') {
    parse_fail(path, 0, "not a PGM file");
  }
  if (buf[1] != '5') {
    parse_fail(path, 1,
               std::string("unsupported magic 'P") + buf[1] +
                   "' (binary P5 required)");
  }
  pos = 2;
  Pgm pgm;
  pgm.w = parse_int(buf, &pos, path);
  pgm.h = parse_int(buf, &pos, path);
  pgm.maxval = parse_int(buf, &pos, path);
  if (pgm.w <= 0 || pgm.h <= 0) {
    parse_fail(path, pos, "non-positive dimensions");
  }
  if (pgm.maxval < 1 || pgm.maxval > 255) {
    parse_fail(path, pos, "maxval must be in [1,255]");
  }
  if (pos >= buf.size()) parse_fail(path, pos, "missing raster data");
  const char sep = buf[pos];
  if (sep != '\n' && sep != ' ' && sep != '\t' && sep != '\r') {
    parse_fail(path, pos, "expected single whitespace after maxval");
  }
  ++pos;
  const std::size_t expected =
      static_cast<std::size_t>(pgm.w) * static_cast<std::size_t>(pgm.h);
  if (buf.size() - pos != expected) {
    parse_fail(path, pos,
               "raster has " + std::to_string(buf.size() - pos) +
                   " bytes, expected " + std::to_string(expected));
  }
  pgm.data.resize(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    const std::uint8_t v = static_cast<std::uint8_t>(buf[pos + i]);
    if (v > pgm.maxval) {
      parse_fail(path, pos + i,
                 "pixel value " + std::to_string(v) + " exceeds maxval " +
                     std::to_string(pgm.maxval));
    }
    pgm.data[i] = v;
  }
  return pgm;
}

namespace {

std::string sample_name(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04zu", index);
  return buf;
}

}  // namespace

void write_dataset(const Dataset& dataset, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "images", ec);
  fs::create_directories(fs::path(dir) / "masks", ec);
  if (ec) fail(ErrorKind::Io, "cannot create dataset directories under " + dir);

  std::ofstream manifest(fs::path(dir) / "manifest.txt");
  if (!manifest) fail(ErrorKind::Io, "cannot write manifest in " + dir);
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const Sample& s = dataset.samples[i];
    const std::string name = sample_name(i);

    Pgm img;
    img.w = s.w;
    img.h = s.h;
    img.maxval = 255;
    img.data.resize(s.image.size());
    for (std::size_t j = 0; j < s.image.size(); ++j) {
      img.data[j] = static_cast<std::uint8_t>(
          std::lround(std::clamp(s.image[j], 0.0f, 1.0f) * 255.0f));
    }
    write_pgm((fs::path(dir) / "images" / (name + ".pgm")).string(), img);

    Pgm mask;
    mask.w = s.w;
    mask.h = s.h;
    mask.maxval = kNumClasses - 1;
    mask.data = s.mask.values;
    write_pgm((fs::path(dir) / "masks" / (name + ".pgm")).string(), mask);

    manifest << name << "\n";
  }
  if (!manifest) fail(ErrorKind::Io, "short write to manifest in " + dir);
}

Dataset read_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream manifest(fs::path(dir) / "manifest.txt");
  if (!manifest) {
    fail(ErrorKind::Io, "cannot open manifest in " + dir);
  }
  Dataset ds;
  std::string name;
  while (std::getline(manifest, name)) {
    if (name.empty()) continue;
    const Pgm img = read_pgm((fs::path(dir) / "images" / (name + ".pgm")).string());
    const Pgm mask = read_pgm((fs::path(dir) / "masks" / (name + ".pgm")).string());
    if (img.w != mask.w || img.h != mask.h) {
      fail(ErrorKind::Parse, "sample " + name + ": image " +
                                 std::to_string(img.w) + "x" +
                                 std::to_string(img.h) + " vs mask " +
                                 std::to_string(mask.w) + "x" +
                                 std::to_string(mask.h));
    }
    if (img.maxval != 255) {
      fail(ErrorKind::Parse,
           "sample " + name + ": image maxval must be 255");
    }
    if (mask.maxval != kNumClasses - 1) {
      fail(ErrorKind::Parse, "sample " + name + ": mask maxval must be " +
                                 std::to_string(kNumClasses - 1));
    }
    Sample s;
    s.w = img.w;
    s.h = img.h;
    s.image.resize(img.data.size());
    for (std::size_t i = 0; i < img.data.size(); ++i) {
      s.image[i] = static_cast<float>(img.data[i]) / 255.0f;
    }
    s.mask.h = mask.h;
    s.mask.w = mask.w;
    s.mask.values = mask.data;
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.empty()) {
    fail(ErrorKind::Parse, "dataset manifest in " + dir + " lists no samples");
  }
  return ds;
}

}  // namespace splitfed
