#include "repaint/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "repaint/common.hpp"
#include "repaint/rng.hpp"

namespace fs = std::filesystem;

namespace repaint {

namespace {

constexpr int kSupportedShapes = 4;
constexpr int kSupportedTextures = 4;
constexpr double kStripePeriod = 4.0;
constexpr double kDotRadius = 1.5;
constexpr double kDotPeriod = 4.0;
constexpr double kCheckerPeriod = 4.0;

struct Rgb {
  double r, g, b;
};

struct TextureSpec {
  int kind;  // 0 h-stripes, 1 v-stripes, 2 dots, 3 checker
  Rgb color_a, color_b;
  double phase_x, phase_y;
};

Rgb random_color(Rng& rng) { return {rng.uniform(), rng.uniform(), rng.uniform()}; }

double color_dist(const Rgb& a, const Rgb& b) {
  return std::sqrt((a.r - b.r) * (a.r - b.r) + (a.g - b.g) * (a.g - b.g) +
                   (a.b - b.b) * (a.b - b.b));
}

TextureSpec make_texture(int kind, Rng& rng) {
  TextureSpec t;
  t.kind = kind;
  t.color_a = random_color(rng);
  // Resample until the two pattern colors are clearly separated, so the
  // texture is a usable cue rather than near-uniform noise.
  do {
    t.color_b = random_color(rng);
  } while (color_dist(t.color_a, t.color_b) < 0.4);
  t.phase_x = rng.uniform(0.0, kStripePeriod);
  t.phase_y = rng.uniform(0.0, kStripePeriod);
  return t;
}

Rgb texture_at(const TextureSpec& t, double x, double y) {
  auto wrap = [](double v, double period) {
    double m = std::fmod(v, period);
    return m < 0 ? m + period : m;
  };
  bool a = false;
  switch (t.kind) {
    case 0:  // horizontal stripes
      a = wrap(y + t.phase_y, kStripePeriod) < kStripePeriod / 2;
      break;
    case 1:  // vertical stripes
      a = wrap(x + t.phase_x, kStripePeriod) < kStripePeriod / 2;
      break;
    case 2: {  // dot lattice
      const double dx = wrap(x + t.phase_x, kDotPeriod) - kDotPeriod / 2;
      const double dy = wrap(y + t.phase_y, kDotPeriod) - kDotPeriod / 2;
      a = dx * dx + dy * dy <= kDotRadius * kDotRadius;
      break;
    }
    case 3: {  // checkerboard
      const int cx = static_cast<int>(std::floor((x + t.phase_x) / kCheckerPeriod));
      const int cy = static_cast<int>(std::floor((y + t.phase_y) / kCheckerPeriod));
      a = ((cx + cy) & 1) == 0;
      break;
    }
    default:
      break;
  }
  return a ? t.color_a : t.color_b;
}

struct ShapeSpec {
  int kind;  // 0 circle, 1 square, 2 triangle, 3 cross
  double cx, cy, scale, rotation;
};

bool inside_shape(const ShapeSpec& s, double px, double py) {
  const double dx = px - s.cx, dy = py - s.cy;
  const double c = std::cos(-s.rotation), sn = std::sin(-s.rotation);
  const double x = c * dx - sn * dy;
  const double y = sn * dx + c * dy;
  switch (s.kind) {
    case 0:
      return x * x + y * y <= s.scale * s.scale;
    case 1: {
      const double half = s.scale / std::numbers::sqrt2;
      return std::fabs(x) <= half && std::fabs(y) <= half;
    }
    case 2: {
      // Equilateral triangle, circumradius = scale, apex pointing up.
      constexpr double kThird = 2.0 * std::numbers::pi / 3.0;
      for (int i = 0; i < 3; ++i) {
        const double a = std::numbers::pi / 2 + kThird * i;
        const double vx = std::cos(a) * s.scale, vy = std::sin(a) * s.scale;
        const double wx = std::cos(a + kThird) * s.scale, wy = std::sin(a + kThird) * s.scale;
        // Inside means left of every edge (vertices are counter-clockwise).
        if ((wx - vx) * (y - vy) - (wy - vy) * (x - vx) < 0) return false;
      }
      return true;
    }
    case 3: {
      const double arm = 0.4 * s.scale;
      return (std::fabs(x) <= arm && std::fabs(y) <= s.scale) ||
             (std::fabs(y) <= arm && std::fabs(x) <= s.scale);
    }
    default:
      return false;
  }
}

// enum for rng substream ids
enum : uint64_t { kStreamTrain = 1, kStreamVal = 2, kStreamCue = 3 };

Sample render_sample(const SynthConfig& cfg, uint64_t stream, int index, bool cue_conflict) {
  Rng rng = Rng::substream(cfg.seed, stream, static_cast<uint64_t>(index));
  const int res = cfg.resolution;
  const int C = cfg.num_shape_classes;

  Sample s;
  s.shape_label = index % C;

  const int64_t matched = s.shape_label % cfg.num_textures;
  if (!cue_conflict && rng.uniform() < cfg.train_correlation) {
    s.texture_label = matched;
  } else {
    // uniform over the textures other than the class-matched one
    int64_t t = rng.uniform_int(0, cfg.num_textures - 2);
    if (t >= matched) ++t;
    s.texture_label = t;
  }

  ShapeSpec shape;
  shape.kind = static_cast<int>(s.shape_label);
  shape.scale = rng.uniform(0.22, 0.34) * res;
  const double margin = shape.scale + 2.0;
  if (2.0 * margin >= res)
    throw InputError(strcat_msg("shape of scale ", shape.scale, " does not fit resolution ", res));
  shape.cx = rng.uniform(margin, res - margin);
  shape.cy = rng.uniform(margin, res - margin);
  shape.rotation = shape.kind == 0 ? 0.0 : rng.uniform(0.0, 2.0 * std::numbers::pi);

  const TextureSpec fg = make_texture(static_cast<int>(s.texture_label), rng);
  // Background texture kind never matches the foreground kind, so the shape
  // boundary stays visible regardless of color draws.
  int64_t bg_kind = rng.uniform_int(0, cfg.num_textures - 2);
  if (bg_kind >= s.texture_label) ++bg_kind;
  const TextureSpec bg = make_texture(static_cast<int>(bg_kind), rng);

  s.image = Tensor::zeros({3, res, res}, DType::F32);
  s.gt_mask.width = res;
  s.gt_mask.height = res;
  s.gt_mask.labels.assign(static_cast<size_t>(res) * res, 0);
  s.has_mask = true;

  auto img = s.image.data<float>();
  const int64_t hw = static_cast<int64_t>(res) * res;
  constexpr int kSS = 4;  // 4x supersampling per axis
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      double acc_r = 0, acc_g = 0, acc_b = 0;
      int cover = 0;
      for (int sy = 0; sy < kSS; ++sy)
        for (int sx = 0; sx < kSS; ++sx) {
          const double px = x + (sx + 0.5) / kSS;
          const double py = y + (sy + 0.5) / kSS;
          const bool in = inside_shape(shape, px, py);
          cover += in;
          const Rgb col = texture_at(in ? fg : bg, px, py);
          acc_r += col.r;
          acc_g += col.g;
          acc_b += col.b;
        }
      const double inv = 1.0 / (kSS * kSS);
      // straight to model range [-1,1]
      img[static_cast<size_t>(0 * hw + y * res + x)] = static_cast<float>(acc_r * inv * 2 - 1);
      img[static_cast<size_t>(1 * hw + y * res + x)] = static_cast<float>(acc_g * inv * 2 - 1);
      img[static_cast<size_t>(2 * hw + y * res + x)] = static_cast<float>(acc_b * inv * 2 - 1);
      if (cover * 2 > kSS * kSS)
        s.gt_mask.labels[static_cast<size_t>(y) * res + x] = 1;
    }
  }
  return s;
}

}  // namespace

void SynthConfig::validate() const {
  if (num_shape_classes < 2 || num_shape_classes > kSupportedShapes)
    throw ConfigError(strcat_msg("num_shape_classes must be in [2,", kSupportedShapes, "], got ",
                                 num_shape_classes));
  if (num_textures < 2 || num_textures > kSupportedTextures)
    throw ConfigError(strcat_msg("num_textures must be in [2,", kSupportedTextures, "], got ",
                                 num_textures));
  if (train_correlation < 0.0 || train_correlation > 1.0)
    throw ConfigError("train_correlation must be in [0,1]");
  if (train_count < 1 || val_count < 1 || cue_conflict_count < 1)
    throw ConfigError("sample counts must be >= 1");
  if (resolution < 16 || resolution % 16 != 0)
    throw ConfigError(strcat_msg("resolution must be a positive multiple of 16, got ", resolution));
  if (data_fraction <= 0.0 || data_fraction > 1.0)
    throw ConfigError("data_fraction must be in (0,1]");
}

Dataset gen_dataset(const SynthConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.train.items.reserve(static_cast<size_t>(cfg.train_count));
  for (int i = 0; i < cfg.train_count; ++i)
    ds.train.items.push_back(render_sample(cfg, kStreamTrain, i, false));
  for (int i = 0; i < cfg.val_count; ++i)
    ds.val.items.push_back(render_sample(cfg, kStreamVal, i, false));
  for (int i = 0; i < cfg.cue_conflict_count; ++i)
    ds.cue_conflict.items.push_back(render_sample(cfg, kStreamCue, i, true));
  if (cfg.data_fraction < 1.0)
    ds.train = subsample_fraction(ds.train, cfg.data_fraction, cfg.num_shape_classes);
  return ds;
}

SampleSet subsample_fraction(const SampleSet& set, double fraction, int num_classes) {
  if (fraction <= 0.0 || fraction > 1.0) throw ConfigError("data_fraction must be in (0,1]");
  if (fraction == 1.0) return set;
  const int64_t target = std::max<int64_t>(
      1, static_cast<int64_t>(std::llround(fraction * static_cast<double>(set.items.size()))));
  // Per-class quotas keep the subset balanced within +/-1.
  std::vector<int64_t> quota(static_cast<size_t>(num_classes), target / num_classes);
  for (int64_t r = 0; r < target % num_classes; ++r) ++quota[static_cast<size_t>(r)];
  SampleSet out;
  std::vector<int64_t> taken(static_cast<size_t>(num_classes), 0);
  for (const Sample& s : set.items) {
    const auto c = static_cast<size_t>(s.shape_label % num_classes);
    if (taken[c] < quota[c]) {
      out.items.push_back(s);
      ++taken[c];
    }
  }
  return out;
}

Tensor to_model_range(const ImageU8& img, DType dt) {
  Tensor t = Tensor::zeros({3, img.height, img.width}, dt);
  dispatch(dt, [&](auto tag) {
    using T = decltype(tag);
    auto d = t.data<T>();
    const int64_t hw = static_cast<int64_t>(img.height) * img.width;
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        for (int c = 0; c < 3; ++c) {
          const uint8_t v = img.at(y, x, img.channels == 3 ? c : 0);
          d[static_cast<size_t>(c * hw + y * img.width + x)] =
              static_cast<T>(v / 127.5 - 1.0);
        }
  });
  return t;
}

ImageU8 from_model_range(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw DimensionError(strcat_msg("from_model_range: expected [3,H,W], got ",
                                    shape_str(image.shape())));
  const int h = static_cast<int>(image.dim(1));
  const int w = static_cast<int>(image.dim(2));
  ImageU8 img = ImageU8::make(w, h, 3);
  const std::vector<double> v = image.to_vector();
  const int64_t hw = static_cast<int64_t>(h) * w;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double f = v[static_cast<size_t>(c * hw + y * w + x)];
        f = std::min(1.0, std::max(-1.0, f));
        img.at(y, x, c) = static_cast<uint8_t>(std::lround((f + 1.0) * 127.5));
      }
  return img;
}

Tensor unit_to_model(const Tensor& image01) {
  Tensor out = image01.detach();
  dispatch(out.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto d = out.data<T>();
    for (auto& x : d) x = static_cast<T>(2.0 * static_cast<double>(x) - 1.0);
  });
  return out;
}

Tensor model_to_unit(const Tensor& image) {
  Tensor out = image.detach();
  dispatch(out.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto d = out.data<T>();
    for (auto& x : d) {
      double f = (static_cast<double>(x) + 1.0) / 2.0;
      x = static_cast<T>(std::min(1.0, std::max(0.0, f)));
    }
  });
  return out;
}

namespace {

std::string sample_filename(size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img_%05zu.png", index);
  return buf;
}

}  // namespace

void export_sample_set(const SampleSet& set, const std::string& dir) {
  fs::create_directories(dir);
  fs::create_directories(fs::path(dir) / "masks");
  std::ofstream csv(fs::path(dir) / "labels.csv");
  if (!csv) throw InputError(strcat_msg("cannot write labels.csv in ", dir));
  csv << "filename,shape_label,texture_label\n";
  for (size_t i = 0; i < set.items.size(); ++i) {
    const Sample& s = set.items[i];
    const std::string name = sample_filename(i);
    write_png((fs::path(dir) / name).string(), from_model_range(s.image));
    if (s.has_mask) write_label_png((fs::path(dir) / "masks" / name).string(), s.gt_mask);
    csv << name << "," << s.shape_label << "," << s.texture_label << "\n";
  }
}

void export_dataset(const Dataset& ds, const std::string& root) {
  export_sample_set(ds.train, (fs::path(root) / "train").string());
  export_sample_set(ds.val, (fs::path(root) / "val").string());
  export_sample_set(ds.cue_conflict, (fs::path(root) / "cue_conflict").string());
}

SampleSet load_image_dir(const std::string& dir, int resolution) {
  if (!fs::is_directory(dir)) throw InputError(strcat_msg("not a directory: ", dir));

  std::map<std::string, std::pair<int64_t, int64_t>> labels;  // filename -> (shape, texture)
  const fs::path csv_path = fs::path(dir) / "labels.csv";
  if (fs::exists(csv_path)) {
    std::ifstream csv(csv_path);
    std::string line;
    bool first = true;
    while (std::getline(csv, line)) {
      if (line.empty()) continue;
      if (first && line.rfind("filename", 0) == 0) {
        first = false;
        continue;
      }
      first = false;
      std::istringstream ss(line);
      std::string name, shape_s, tex_s;
      if (!std::getline(ss, name, ',') || !std::getline(ss, shape_s, ','))
        throw InputError(strcat_msg("malformed line in ", csv_path.string(), ": ", line));
      std::getline(ss, tex_s, ',');
      labels[name] = {std::stoll(shape_s), tex_s.empty() ? -1 : std::stoll(tex_s)};
    }
  } else {
    throw InputError(strcat_msg("missing labels.csv in ", dir));
  }

  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path().filename());
  std::sort(files.begin(), files.end());

  std::string unlabeled;
  for (const std::string& f : files)
    if (!labels.count(f)) unlabeled += (unlabeled.empty() ? "" : ", ") + f;
  if (!unlabeled.empty())
    throw InputError(strcat_msg("images without labels in ", dir, ": ", unlabeled));

  SampleSet set;
  for (const std::string& f : files) {
    ImageU8 img = read_png((fs::path(dir) / f).string());
    if (img.width != resolution || img.height != resolution)
      img = resize_bilinear(img, resolution, resolution);
    Sample s;
    s.image = to_model_range(img);
    s.shape_label = labels[f].first;
    s.texture_label = labels[f].second;
    const fs::path mask_path = fs::path(dir) / "masks" / f;
    if (fs::exists(mask_path)) {
      LabelMap lm = read_label_png(mask_path.string());
      if (lm.width != resolution || lm.height != resolution)
        lm = resize_labels(lm, resolution, resolution);
      s.gt_mask = std::move(lm);
      s.has_mask = true;
    }
    set.items.push_back(std::move(s));
  }
  return set;
}

Dataset load_dataset_dir(const std::string& root, int resolution) {
  Dataset ds;
  ds.train = load_image_dir((fs::path(root) / "train").string(), resolution);
  ds.val = load_image_dir((fs::path(root) / "val").string(), resolution);
  const fs::path cue = fs::path(root) / "cue_conflict";
  if (fs::is_directory(cue)) ds.cue_conflict = load_image_dir(cue.string(), resolution);
  return ds;
}

double shape_area(int shape_class, double scale) {
  switch (shape_class) {
    case 0:
      return std::numbers::pi * scale * scale;
    case 1:
      return 2.0 * scale * scale;
    case 2:
      return 3.0 * std::numbers::sqrt3 * scale * scale / 4.0;
    case 3:
      return 2.56 * scale * scale;  // two 2s x 0.8s bars minus their overlap
    default:
      throw ConfigError(strcat_msg("unknown shape class ", shape_class));
  }
}

}  // namespace repaint
