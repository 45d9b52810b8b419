#include "mpcnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace mpcnn {

namespace {

constexpr u32 kImageMagic = 0x00000803;
constexpr u32 kLabelMagic = 0x00000801;

std::vector<u8> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return std::vector<u8>((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
}

u32 be32(const std::vector<u8>& buf, std::size_t at, const std::string& path) {
  if (at + 4 > buf.size())
    throw FormatError(path + ": truncated at offset " + std::to_string(buf.size()));
  return u32(buf[at]) << 24 | u32(buf[at + 1]) << 16 | u32(buf[at + 2]) << 8 | u32(buf[at + 3]);
}

void be32_out(std::ofstream& out, u32 v) {
  u8 b[4] = {u8(v >> 24), u8(v >> 16), u8(v >> 8), u8(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

double next_normal(Prg& rng) {
  double u1;
  do {
    u1 = rng.next_unit();
  } while (u1 <= 0.0);
  double u2 = rng.next_unit();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::vector<u8> img = slurp(images_path);
  u32 magic = be32(img, 0, images_path);
  if (magic != kImageMagic)
    throw FormatError(images_path + ": bad magic at offset 0, want 0x00000803");
  u32 count = be32(img, 4, images_path);
  u32 rows = be32(img, 8, images_path);
  u32 cols = be32(img, 12, images_path);
  std::size_t need = 16 + std::size_t(count) * rows * cols;
  if (img.size() < need)
    throw FormatError(images_path + ": truncated at offset " + std::to_string(img.size()) +
                      ", want " + std::to_string(need) + " bytes");

  std::vector<u8> lab = slurp(labels_path);
  u32 lmagic = be32(lab, 0, labels_path);
  if (lmagic != kLabelMagic)
    throw FormatError(labels_path + ": bad magic at offset 0, want 0x00000801");
  u32 lcount = be32(lab, 4, labels_path);
  if (lcount != count)
    throw FormatError(labels_path + ": count at offset 4 is " + std::to_string(lcount) +
                      " but the image file holds " + std::to_string(count));
  if (lab.size() < 8 + std::size_t(count))
    throw FormatError(labels_path + ": truncated at offset " + std::to_string(lab.size()));

  Dataset d;
  d.count = count;
  d.rows = rows;
  d.cols = cols;
  d.images.resize(std::size_t(count) * rows * cols);
  for (std::size_t i = 0; i < d.images.size(); ++i) d.images[i] = float(img[16 + i]) / 255.0f;
  d.labels.assign(lab.begin() + 8, lab.begin() + 8 + count);
  return d;
}

void write_idx(const Dataset& d, const std::string& images_path,
               const std::string& labels_path) {
  std::ofstream img(images_path, std::ios::binary);
  if (!img) throw FormatError("cannot open " + images_path + " for writing");
  be32_out(img, kImageMagic);
  be32_out(img, u32(d.count));
  be32_out(img, u32(d.rows));
  be32_out(img, u32(d.cols));
  for (float v : d.images) {
    u8 b = u8(std::clamp(std::lround(v * 255.0f), 0l, 255l));
    img.write(reinterpret_cast<const char*>(&b), 1);
  }
  std::ofstream lab(labels_path, std::ios::binary);
  if (!lab) throw FormatError("cannot open " + labels_path + " for writing");
  be32_out(lab, kLabelMagic);
  be32_out(lab, u32(d.count));
  lab.write(reinterpret_cast<const char*>(d.labels.data()), std::streamsize(d.count));
}

namespace {

constexpr std::size_t kSide = 28;

std::vector<double> blur_wrap(const std::vector<double>& p) {
  std::vector<double> out(p.size());
  for (std::size_t r = 0; r < kSide; ++r)
    for (std::size_t c = 0; c < kSide; ++c) {
      double acc = 0;
      for (int dr = -2; dr <= 2; ++dr)
        for (int dc = -2; dc <= 2; ++dc) {
          std::size_t rr = (r + kSide + std::size_t(dr + int(kSide))) % kSide;
          std::size_t cc = (c + kSide + std::size_t(dc + int(kSide))) % kSide;
          acc += p[rr * kSide + cc];
        }
      out[r * kSide + c] = acc / 25.0;
    }
  return out;
}

void sample_into(Dataset& d, std::size_t count, const std::vector<std::vector<double>>& protos,
                 Prg& rng) {
  d.count = count;
  d.rows = d.cols = kSide;
  d.images.resize(count * kSide * kSide);
  d.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t label = rng.next_below(protos.size());
    d.labels[i] = u8(label);
    std::size_t dr = rng.next_below(7);  // wrapped shift in [-3, 3]
    std::size_t dc = rng.next_below(7);
    const std::vector<double>& p = protos[label];
    for (std::size_t r = 0; r < kSide; ++r)
      for (std::size_t c = 0; c < kSide; ++c) {
        std::size_t rr = (r + dr + kSide - 3) % kSide;
        std::size_t cc = (c + dc + kSide - 3) % kSide;
        double v = p[rr * kSide + cc] + 0.35 * next_normal(rng);
        d.images[(i * kSide + r) * kSide + c] = float(std::clamp(v, 0.0, 1.0));
      }
  }
}

}  // namespace

Corpus synth_corpus(std::size_t train_count, std::size_t test_count, u64 seed,
                    std::size_t classes) {
  if (classes < 2 || classes > 256) throw ConfigError("synth corpus: class count out of range");
  Prg rng(seed);
  std::vector<std::vector<double>> protos(classes);
  for (auto& p : protos) {
    p.resize(kSide * kSide);
    for (double& v : p) v = rng.next_unit();
    for (int pass = 0; pass < 3; ++pass) p = blur_wrap(p);
    auto [lo, hi] = std::minmax_element(p.begin(), p.end());
    double span = *hi - *lo;
    if (span <= 0) span = 1;
    for (double& v : p) v = (v - *lo) / span;
  }
  Corpus c;
  sample_into(c.train, train_count, protos, rng);
  sample_into(c.test, test_count, protos, rng);
  return c;
}

void subset(Dataset& d, std::size_t n) {
  if (n >= d.count) return;
  d.count = n;
  d.images.resize(n * d.rows * d.cols);
  d.labels.resize(n);
}

void downsample2(Dataset& d) {
  if (d.rows % 2 || d.cols % 2)
    throw ConfigError("downsample: image dimensions must be even");
  std::size_t nr = d.rows / 2, nc = d.cols / 2;
  std::vector<float> out(d.count * nr * nc);
  for (std::size_t i = 0; i < d.count; ++i)
    for (std::size_t r = 0; r < nr; ++r)
      for (std::size_t c = 0; c < nc; ++c) {
        const float* base = d.images.data() + (i * d.rows + 2 * r) * d.cols + 2 * c;
        out[(i * nr + r) * nc + c] =
            (base[0] + base[1] + base[d.cols] + base[d.cols + 1]) / 4.0f;
      }
  d.rows = nr;
  d.cols = nc;
  d.images = std::move(out);
}

}  // namespace mpcnn
