#include "effssl/datapipe/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "effssl/rng.hpp"

namespace fs = std::filesystem;

namespace effssl::data {

void ImageBatch::validate() const {
  if (pixels.rank() != 4 || size() < 1) throw std::invalid_argument("ImageBatch: empty batch");
  if (height() != width()) throw std::invalid_argument("ImageBatch: images must be square");
  if (!pixels.all_finite()) throw std::invalid_argument("ImageBatch: non-finite pixels");
  if (static_cast<int64_t>(ids.size()) != size())
    throw std::invalid_argument("ImageBatch: ids size mismatch");
  std::set<int64_t> seen(ids.begin(), ids.end());
  if (static_cast<int64_t>(seen.size()) != size())
    throw std::invalid_argument("ImageBatch: duplicate ids");
  if (!labels.empty() && static_cast<int64_t>(labels.size()) != size())
    throw std::invalid_argument("ImageBatch: labels size mismatch");
}

ImageBatch Dataset::gather(const std::vector<int64_t>& indices) const {
  if (indices.empty()) throw std::invalid_argument("gather: no indices");
  const Tensor& first = images.at(static_cast<size_t>(indices[0]));
  const int64_t c = first.dim(0), h = first.dim(1), w = first.dim(2);
  ImageBatch batch;
  batch.pixels = Tensor({static_cast<int64_t>(indices.size()), c, h, w});
  batch.ids = indices;
  batch.labels.reserve(indices.size());
  float* dst = batch.pixels.data();
  const int64_t stride = c * h * w;
  for (size_t i = 0; i < indices.size(); ++i) {
    const Tensor& img = images.at(static_cast<size_t>(indices[i]));
    if (img.dim(0) != c || img.dim(1) != h || img.dim(2) != w)
      throw std::invalid_argument("gather: mixed image shapes");
    std::memcpy(dst + static_cast<int64_t>(i) * stride, img.data(),
                sizeof(float) * static_cast<size_t>(stride));
    batch.labels.push_back(labels.at(static_cast<size_t>(indices[i])));
  }
  return batch;
}

SourceFormat parse_source_format(const std::string& tag) {
  if (tag == "cifar-binary") return SourceFormat::CifarBinary;
  if (tag == "image-folder") return SourceFormat::ImageFolder;
  if (tag == "synthetic") return SourceFormat::Synthetic;
  throw std::invalid_argument("unknown dataset format tag: " + tag);
}

namespace {

constexpr int64_t kCifarDim = 32;
constexpr int64_t kCifarRecord = 1 + 3 * kCifarDim * kCifarDim;

void load_cifar_file(const std::string& file, Dataset& out) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + file);
  in.seekg(0, std::ios::end);
  const int64_t bytes = in.tellg();
  in.seekg(0);
  if (bytes % kCifarRecord != 0)
    throw std::runtime_error("malformed CIFAR record length in " + file + ": " +
                             std::to_string(bytes) + " bytes is not a multiple of 3073");
  std::vector<unsigned char> rec(kCifarRecord);
  const int64_t n = bytes / kCifarRecord;
  for (int64_t r = 0; r < n; ++r) {
    in.read(reinterpret_cast<char*>(rec.data()), kCifarRecord);
    if (!in) throw std::runtime_error("truncated CIFAR record in " + file);
    Tensor img({3, kCifarDim, kCifarDim});
    for (int64_t i = 0; i < 3 * kCifarDim * kCifarDim; ++i)
      img[i] = static_cast<float>(rec[static_cast<size_t>(1 + i)]) / 255.0f;
    out.images.push_back(std::move(img));
    out.labels.push_back(static_cast<int>(rec[0]));
  }
}

Tensor center_crop_square(const Tensor& img) {
  const int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  if (h == w) return img;
  const int64_t s = std::min(h, w);
  const int64_t oy = (h - s) / 2, ox = (w - s) / 2;
  Tensor out({c, s, s});
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t y = 0; y < s; ++y)
      for (int64_t x = 0; x < s; ++x)
        out[(ch * s + y) * s + x] = img[(ch * h + (y + oy)) * w + (x + ox)];
  return out;
}

uint16_t read_u16le(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}
uint32_t read_u32le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0] | (b[1] << 8) | (b[2] << 16) | (b[3] << 24));
}

Tensor load_pnm(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + file);
  std::string magic;
  in >> magic;
  if (magic != "P6" && magic != "P5") throw std::runtime_error("unsupported PNM magic in " + file);
  const int channels = (magic == "P6") ? 3 : 1;
  auto next_token = [&in, &file]() {
    std::string tok;
    while (in >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return tok;
    }
    throw std::runtime_error("truncated PNM header in " + file);
  };
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (maxval <= 0 || maxval > 255) throw std::runtime_error("unsupported PNM maxval in " + file);
  in.get();  // single whitespace after header
  std::vector<unsigned char> raw(static_cast<size_t>(w) * h * channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!in) throw std::runtime_error("truncated PNM payload in " + file);
  Tensor img({channels, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        img[(static_cast<int64_t>(c) * h + y) * w + x] =
            static_cast<float>(raw[(static_cast<size_t>(y) * w + x) * channels + c]) /
            static_cast<float>(maxval);
  return img;
}

Tensor load_bmp(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + file);
  char magic[2];
  in.read(magic, 2);
  if (magic[0] != 'B' || magic[1] != 'M') throw std::runtime_error("not a BMP file: " + file);
  in.ignore(8);
  const uint32_t data_offset = read_u32le(in);
  const uint32_t header_size = read_u32le(in);
  if (header_size < 40) throw std::runtime_error("unsupported BMP header in " + file);
  const int32_t w = static_cast<int32_t>(read_u32le(in));
  const int32_t h = static_cast<int32_t>(read_u32le(in));
  read_u16le(in);  // planes
  const uint16_t bpp = read_u16le(in);
  const uint32_t compression = read_u32le(in);
  if (bpp != 24 || compression != 0)
    throw std::runtime_error("only uncompressed 24-bit BMP supported: " + file);
  in.seekg(data_offset);
  const int64_t row_bytes = ((static_cast<int64_t>(w) * 3 + 3) / 4) * 4;
  std::vector<unsigned char> row(static_cast<size_t>(row_bytes));
  Tensor img({3, std::abs(h), w});
  const int64_t hh = std::abs(h);
  for (int64_t r = 0; r < hh; ++r) {
    in.read(reinterpret_cast<char*>(row.data()), row_bytes);
    if (!in) throw std::runtime_error("truncated BMP payload in " + file);
    const int64_t y = (h > 0) ? (hh - 1 - r) : r;  // bottom-up unless height negative
    for (int64_t x = 0; x < w; ++x) {
      img[(0 * hh + y) * w + x] = static_cast<float>(row[static_cast<size_t>(x * 3 + 2)]) / 255.0f;
      img[(1 * hh + y) * w + x] = static_cast<float>(row[static_cast<size_t>(x * 3 + 1)]) / 255.0f;
      img[(2 * hh + y) * w + x] = static_cast<float>(row[static_cast<size_t>(x * 3 + 0)]) / 255.0f;
    }
  }
  return img;
}

}  // namespace

Dataset load_cifar_binary(const std::string& path) {
  Dataset ds;
  ds.num_classes = 10;
  if (!fs::exists(path)) throw std::runtime_error("dataset path does not exist: " + path);
  if (fs::is_directory(path)) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(path)) {
      if (e.path().extension() == ".bin") files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("no .bin files under " + path);
    for (const auto& f : files) load_cifar_file(f, ds);
  } else {
    load_cifar_file(path, ds);
  }
  int maxl = 0;
  for (int l : ds.labels) maxl = std::max(maxl, l);
  ds.num_classes = std::max(ds.num_classes, maxl + 1);
  return ds;
}

Dataset load_image_folder(const std::string& path) {
  if (!fs::is_directory(path)) throw std::runtime_error("not a directory: " + path);
  std::vector<std::string> class_dirs;
  for (const auto& e : fs::directory_iterator(path))
    if (e.is_directory()) class_dirs.push_back(e.path().string());
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw std::runtime_error("no class subdirectories under " + path);

  Dataset ds;
  ds.num_classes = static_cast<int>(class_dirs.size());
  for (size_t ci = 0; ci < class_dirs.size(); ++ci) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(class_dirs[ci]))
      if (e.is_regular_file()) files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const std::string ext = fs::path(f).extension().string();
      Tensor img;
      if (ext == ".ppm" || ext == ".pgm")
        img = load_pnm(f);
      else if (ext == ".bmp")
        img = load_bmp(f);
      else
        throw std::runtime_error("unsupported raster format: " + f);
      ds.images.push_back(center_crop_square(img));
      ds.labels.push_back(static_cast<int>(ci));
    }
  }
  if (ds.images.empty()) throw std::runtime_error("no images found under " + path);
  return ds;
}

Dataset make_synthetic(const SyntheticSpec& spec) {
  if (spec.count < 1 || spec.classes < 1 || spec.size < 2)
    throw std::invalid_argument("make_synthetic: bad spec");
  Dataset ds;
  ds.num_classes = spec.classes;
  ds.images.reserve(static_cast<size_t>(spec.count));
  ds.labels.reserve(static_cast<size_t>(spec.count));

  RngStream rng = RngStream::child(spec.seed, "synthetic");
  const int S = spec.size;
  const int C = spec.channels;

  // Per-class appearance: grating angle, palette color, blob center.
  // Class appearance depends only on the class index so differently seeded
  // draws (train/test splits) sample the same class-conditional distribution.
  //
  // The class signal is second order: a foreground disc carries a grating
  // whose orientation RELATIVE to the background grating encodes the class,
  // while both absolute orientations are uniformly random. Pooled first-order
  // orientation statistics are therefore class-blind; classification needs
  // learned spatial features. A vertical luminance ramp gives every image a
  // consistent "up" so rotation prediction is well-posed, and a weak class
  // tint leaves a small linear shortcut so untrained baselines sit above
  // chance without saturating.
  std::vector<std::array<double, 3>> tint(spec.classes);
  RngStream class_rng = RngStream::child(0x5e55c1a5u, "synthetic-classes");
  for (int k = 0; k < spec.classes; ++k)
    for (int c = 0; c < 3; ++c) tint[k][static_cast<size_t>(c)] = class_rng.uniform(-0.06, 0.06);
  const double freq = 0.22;

  for (int64_t i = 0; i < spec.count; ++i) {
    const int k = static_cast<int>(i % spec.classes);
    const double rel_jitter = M_PI / (4.0 * spec.classes);
    const double bg_ang = rng.uniform(0.0, M_PI);
    const double fg_ang =
        bg_ang + M_PI * k / spec.classes + rng.uniform(-rel_jitter, rel_jitter);
    const double bg_ca = std::cos(bg_ang), bg_sa = std::sin(bg_ang);
    const double fg_ca = std::cos(fg_ang), fg_sa = std::sin(fg_ang);
    const double bg_phase = rng.uniform(0.0, 2.0 * M_PI);
    const double fg_phase = rng.uniform(0.0, 2.0 * M_PI);
    const double amp = rng.uniform(0.18, 0.34);
    const double cx = 0.5 + rng.uniform(-0.08, 0.08);
    const double cy = 0.5 + rng.uniform(-0.08, 0.08);
    const double radius = rng.uniform(0.24, 0.30);
    std::array<double, 3> col;
    for (int c = 0; c < 3; ++c)
      col[static_cast<size_t>(c)] = 0.45 + tint[k][static_cast<size_t>(c)] + rng.uniform(-0.04, 0.04);

    Tensor img({C, S, S});
    for (int y = 0; y < S; ++y) {
      for (int x = 0; x < S; ++x) {
        const double u = (x + 0.5) / S, v = (y + 0.5) / S;
        const double sky = 0.22 * (1.0 - v);
        const double dx = u - cx, dy = v - cy;
        const double d = std::sqrt(dx * dx + dy * dy);
        // Smooth disc mask blending foreground over background.
        const double m = 1.0 / (1.0 + std::exp((d - radius) / 0.02));
        const double bg = std::sin(2.0 * M_PI * freq * S * (u * bg_ca + v * bg_sa) + bg_phase);
        const double fg = std::sin(2.0 * M_PI * freq * S * (u * fg_ca + v * fg_sa) + fg_phase);
        const double wave = amp * (m * fg + (1.0 - m) * bg);
        for (int c = 0; c < C; ++c) {
          const double noise = rng.normal(0.0, 0.08);
          const double val = sky + col[static_cast<size_t>(c % 3)] * 0.55 + wave + noise;
          img[(static_cast<int64_t>(c) * S + y) * S + x] =
              static_cast<float>(std::clamp(val, 0.0, 1.0));
        }
      }
    }
    ds.images.push_back(std::move(img));
    ds.labels.push_back(k);
  }
  return ds;
}

Dataset load_dataset(const std::string& path, const std::string& format_tag) {
  switch (parse_source_format(format_tag)) {
    case SourceFormat::CifarBinary:
      return load_cifar_binary(path);
    case SourceFormat::ImageFolder:
      return load_image_folder(path);
    case SourceFormat::Synthetic: {
      SyntheticSpec spec;
      std::stringstream ss(path);
      std::string kv;
      while (std::getline(ss, kv, ',')) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("bad synthetic spec: " + path);
        const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
        if (key == "seed") spec.seed = std::stoull(val);
        else if (key == "n") spec.count = std::stoll(val);
        else if (key == "classes") spec.classes = std::stoi(val);
        else if (key == "size") spec.size = std::stoi(val);
        else if (key == "channels") spec.channels = std::stoi(val);
        else throw std::invalid_argument("unknown synthetic spec key: " + key);
      }
      return make_synthetic(spec);
    }
  }
  throw std::logic_error("unreachable");
}

}  // namespace effssl::data
