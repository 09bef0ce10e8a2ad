#include "repaint/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "repaint/common.hpp"
#include "repaint/image_io.hpp"

namespace repaint {

namespace {

struct Edge {
  float w;
  int32_t a, b;  // a < b, linear pixel ids
};

// Union-find with path compression and size tracking.
struct Dsu {
  std::vector<int32_t> parent;
  std::vector<int32_t> size;

  explicit Dsu(int n) : parent(static_cast<size_t>(n)), size(static_cast<size_t>(n), 1) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int32_t find(int32_t x) {
    while (parent[static_cast<size_t>(x)] != x) {
      parent[static_cast<size_t>(x)] = parent[static_cast<size_t>(parent[static_cast<size_t>(x)])];
      x = parent[static_cast<size_t>(x)];
    }
    return x;
  }
  int32_t unite(int32_t a, int32_t b) {  // returns surviving root
    if (size[static_cast<size_t>(a)] < size[static_cast<size_t>(b)]) std::swap(a, b);
    parent[static_cast<size_t>(b)] = a;
    size[static_cast<size_t>(a)] += size[static_cast<size_t>(b)];
    return a;
  }
};

std::vector<Edge> build_edges(const std::vector<double>& img, int h, int w) {
  // 8-connectivity; each undirected edge emitted once from its lexicographically
  // smaller endpoint, so edge order is tie-break stable by construction.
  std::vector<Edge> edges;
  edges.reserve(static_cast<size_t>(4) * h * w);
  const int64_t hw = static_cast<int64_t>(h) * w;
  auto weight = [&](int64_t p, int64_t q) {
    double s = 0;
    for (int c = 0; c < 3; ++c) {
      const double d = img[static_cast<size_t>(c * hw + p)] - img[static_cast<size_t>(c * hw + q)];
      s += d * d;
    }
    return static_cast<float>(std::sqrt(s));
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int32_t p = y * w + x;
      if (x + 1 < w) edges.push_back({weight(p, p + 1), p, p + 1});
      if (y + 1 < h) {
        edges.push_back({weight(p, p + w), p, p + w});
        if (x + 1 < w) edges.push_back({weight(p, p + w + 1), p, p + w + 1});
        if (x > 0) edges.push_back({weight(p, p + w - 1), p, p + w - 1});
      }
    }
  }
  return edges;
}

LabelMap relabel_by_size(Dsu& dsu, int h, int w) {
  const int n = h * w;
  // Decreasing size, ties by smallest member pixel (== first occurrence of
  // the root when scanning in pixel order, since find() is id-stable here).
  std::vector<int32_t> first_pixel(static_cast<size_t>(n), -1);
  std::vector<int32_t> roots;
  for (int32_t p = 0; p < n; ++p) {
    const int32_t r = dsu.find(p);
    if (first_pixel[static_cast<size_t>(r)] < 0) {
      first_pixel[static_cast<size_t>(r)] = p;
      roots.push_back(r);
    }
  }
  std::sort(roots.begin(), roots.end(), [&](int32_t a, int32_t b) {
    if (dsu.size[static_cast<size_t>(a)] != dsu.size[static_cast<size_t>(b)])
      return dsu.size[static_cast<size_t>(a)] > dsu.size[static_cast<size_t>(b)];
    return first_pixel[static_cast<size_t>(a)] < first_pixel[static_cast<size_t>(b)];
  });
  std::vector<int32_t> root_label(static_cast<size_t>(n), -1);
  for (size_t i = 0; i < roots.size(); ++i)
    root_label[static_cast<size_t>(roots[i])] = static_cast<int32_t>(i);

  LabelMap lm;
  lm.width = w;
  lm.height = h;
  lm.labels.resize(static_cast<size_t>(n));
  for (int32_t p = 0; p < n; ++p)
    lm.labels[static_cast<size_t>(p)] = root_label[static_cast<size_t>(dsu.find(p))];
  return lm;
}

}  // namespace

int LabelMap::num_segments() const {
  int32_t m = -1;
  for (int32_t v : labels) m = std::max(m, v);
  return static_cast<int>(m + 1);
}

Tensor gaussian_smooth(const Tensor& image, double sigma) {
  if (image.rank() != 3) throw DimensionError("gaussian_smooth: expected [C,H,W]");
  if (sigma < 0) throw ContractError("gaussian_smooth: sigma must be >= 0");
  Tensor out = image.detach();
  if (sigma == 0.0) return out;
  const int c = static_cast<int>(image.dim(0));
  const int h = static_cast<int>(image.dim(1));
  const int w = static_cast<int>(image.dim(2));
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
  double ksum = 0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<size_t>(i + radius)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    ksum += kernel[static_cast<size_t>(i + radius)];
  }
  for (double& v : kernel) v /= ksum;

  auto reflect = [](int i, int n) {
    while (i < 0 || i >= n) {
      if (i < 0) i = -i - 1;
      if (i >= n) i = 2 * n - i - 1;
    }
    return i;
  };

  dispatch(image.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto dst = out.data<T>();
    std::vector<double> tmp(static_cast<size_t>(h) * w);
    for (int ch = 0; ch < c; ++ch) {
      T* plane = dst.data() + static_cast<size_t>(ch) * h * w;
      // horizontal
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          double acc = 0;
          for (int i = -radius; i <= radius; ++i)
            acc += kernel[static_cast<size_t>(i + radius)] *
                   static_cast<double>(plane[y * w + reflect(x + i, w)]);
          tmp[static_cast<size_t>(y) * w + x] = acc;
        }
      // vertical
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          double acc = 0;
          for (int i = -radius; i <= radius; ++i)
            acc += kernel[static_cast<size_t>(i + radius)] *
                   tmp[static_cast<size_t>(reflect(y + i, h)) * w + x];
          plane[y * w + x] = static_cast<T>(acc);
        }
    }
  });
  return out;
}

LabelMap fh_segment(const Tensor& image, const FHParams& params) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw DimensionError(strcat_msg("fh_segment: expected [3,H,W], got ",
                                    shape_str(image.shape())));
  const int h = static_cast<int>(image.dim(1));
  const int w = static_cast<int>(image.dim(2));
  if (h < 1 || w < 1) throw DimensionError("fh_segment: empty image");
  if (!(params.k > 0)) throw ContractError("fh_segment: k must be > 0");
  if (params.min_size < 1) throw ContractError("fh_segment: min_size must be >= 1");

  Tensor smoothed = gaussian_smooth(image, params.sigma);
  const std::vector<double> img = smoothed.to_vector();

  std::vector<Edge> edges = build_edges(img, h, w);
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    if (a.w != b.w) return a.w < b.w;
    if (a.a != b.a) return a.a < b.a;
    return a.b < b.b;
  });

  const int n = h * w;
  Dsu dsu(n);
  std::vector<float> internal(static_cast<size_t>(n), 0.0f);  // max MST edge per root
  for (const Edge& e : edges) {
    const int32_t ra = dsu.find(e.a), rb = dsu.find(e.b);
    if (ra == rb) continue;
    const double ta = internal[static_cast<size_t>(ra)] +
                      params.k / static_cast<double>(dsu.size[static_cast<size_t>(ra)]);
    const double tb = internal[static_cast<size_t>(rb)] +
                      params.k / static_cast<double>(dsu.size[static_cast<size_t>(rb)]);
    if (e.w <= std::min(ta, tb)) {
      const int32_t r = dsu.unite(ra, rb);
      internal[static_cast<size_t>(r)] = e.w;  // edges ascend, so this is the max
    }
  }

  // Absorb undersized components; ascending edge order picks each small
  // component's nearest neighbor first.
  for (const Edge& e : edges) {
    const int32_t ra = dsu.find(e.a), rb = dsu.find(e.b);
    if (ra == rb) continue;
    if (dsu.size[static_cast<size_t>(ra)] < params.min_size ||
        dsu.size[static_cast<size_t>(rb)] < params.min_size)
      dsu.unite(ra, rb);
  }

  return relabel_by_size(dsu, h, w);
}

MaskTensor encode_mask(const LabelMap& lm, int channels, DType dt) {
  if (channels < 2) throw ContractError("encode_mask: need at least 2 channels");
  const int num = lm.num_segments();
  if (num < 1) throw DimensionError("encode_mask: empty label map");

  std::vector<int64_t> size(static_cast<size_t>(num), 0);
  for (int32_t v : lm.labels) ++size[static_cast<size_t>(v)];
  std::vector<int32_t> order(static_cast<size_t>(num));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
    if (size[static_cast<size_t>(a)] != size[static_cast<size_t>(b)])
      return size[static_cast<size_t>(a)] > size[static_cast<size_t>(b)];
    return a < b;
  });
  std::vector<int32_t> label_to_channel(static_cast<size_t>(num));
  for (int i = 0; i < num; ++i)
    label_to_channel[static_cast<size_t>(order[static_cast<size_t>(i)])] =
        (i < channels - 1) ? i : channels - 1;

  MaskTensor mt;
  mt.channels = channels;
  mt.map = Tensor::zeros({channels, lm.height, lm.width}, dt);
  const int64_t hw = static_cast<int64_t>(lm.height) * lm.width;
  dispatch(dt, [&](auto tag) {
    using T = decltype(tag);
    auto d = mt.map.data<T>();
    for (int64_t p = 0; p < hw; ++p)
      d[static_cast<size_t>(label_to_channel[static_cast<size_t>(lm.labels[static_cast<size_t>(p)])] *
                                hw +
                            p)] = T(1);
  });
  return mt;
}

LabelMap resize_labels(const LabelMap& lm, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw DimensionError("resize_labels: output size must be >= 1");
  LabelMap out;
  out.width = out_w;
  out.height = out_h;
  out.labels.resize(static_cast<size_t>(out_h) * out_w);
  const double sy = static_cast<double>(lm.height) / out_h;
  const double sx = static_cast<double>(lm.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    int iy = static_cast<int>((y + 0.5) * sy);
    iy = std::min(iy, lm.height - 1);
    for (int x = 0; x < out_w; ++x) {
      int ix = static_cast<int>((x + 0.5) * sx);
      ix = std::min(ix, lm.width - 1);
      out.labels[static_cast<size_t>(y) * out_w + x] = lm.at(iy, ix);
    }
  }
  return out;
}

LabelMap mask_to_labels(const MaskTensor& mask) {
  LabelMap lm;
  lm.height = mask.height();
  lm.width = mask.width();
  const int64_t hw = static_cast<int64_t>(lm.height) * lm.width;
  lm.labels.resize(static_cast<size_t>(hw));
  dispatch(mask.map.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto d = mask.map.cdata<T>();
    for (int64_t p = 0; p < hw; ++p) {
      int32_t best = 0;
      T bv = d[static_cast<size_t>(p)];
      for (int c = 1; c < mask.channels; ++c) {
        const T v = d[static_cast<size_t>(c * hw + p)];
        if (v > bv) {
          bv = v;
          best = c;
        }
      }
      lm.labels[static_cast<size_t>(p)] = best;
    }
  });
  return lm;
}

MaskTensor resize_mask(const MaskTensor& mask, int out_h, int out_w) {
  if (out_h == mask.height() && out_w == mask.width()) {
    MaskTensor mt;
    mt.channels = mask.channels;
    mt.map = mask.map.detach();
    return mt;
  }
  const LabelMap lm = resize_labels(mask_to_labels(mask), out_h, out_w);
  // Channel indices are already the label ids here; re-one-hot directly so
  // channel assignments survive the resize unchanged.
  MaskTensor mt;
  mt.channels = mask.channels;
  mt.map = Tensor::zeros({mask.channels, out_h, out_w}, mask.map.dtype());
  const int64_t hw = static_cast<int64_t>(out_h) * out_w;
  dispatch(mt.map.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto d = mt.map.data<T>();
    for (int64_t p = 0; p < hw; ++p)
      d[static_cast<size_t>(lm.labels[static_cast<size_t>(p)] * hw + p)] = T(1);
  });
  return mt;
}

Tensor stack_masks(std::span<const MaskTensor> masks, DType dt) {
  if (masks.empty()) throw DimensionError("stack_masks: empty batch");
  const int K = masks[0].channels, H = masks[0].height(), W = masks[0].width();
  Tensor out = Tensor::zeros({static_cast<int64_t>(masks.size()), K, H, W}, dt);
  dispatch(dt, [&](auto tag) {
    using T = decltype(tag);
    auto d = out.data<T>();
    const int64_t stride = static_cast<int64_t>(K) * H * W;
    for (size_t i = 0; i < masks.size(); ++i) {
      if (masks[i].channels != K || masks[i].height() != H || masks[i].width() != W)
        throw DimensionError("stack_masks: inconsistent mask shapes in batch");
      const std::vector<double> v = masks[i].map.to_vector();
      for (int64_t j = 0; j < stride; ++j)
        d[static_cast<size_t>(static_cast<int64_t>(i) * stride + j)] =
            static_cast<T>(v[static_cast<size_t>(j)]);
    }
  });
  return out;
}

LabelMap read_label_png(const std::string& path) {
  const ImageU8 img = read_png(path);
  if (img.channels != 1)
    throw InputError(strcat_msg("label PNG must be 8-bit grayscale: ", path));
  // Remap stored ids (ascending) to contiguous labels.
  std::map<uint8_t, int32_t> remap;
  for (uint8_t v : img.pixels) remap.emplace(v, 0);
  int32_t next = 0;
  for (auto& [id, lab] : remap) lab = next++;

  LabelMap lm;
  lm.width = img.width;
  lm.height = img.height;
  lm.labels.resize(img.pixels.size());
  for (size_t i = 0; i < img.pixels.size(); ++i) lm.labels[i] = remap[img.pixels[i]];
  return lm;
}

void write_label_png(const std::string& path, const LabelMap& lm) {
  if (lm.num_segments() > 256)
    throw InputError(strcat_msg("label map has ", lm.num_segments(),
                                " segments; 8-bit PNG supports at most 256: ", path));
  ImageU8 img = ImageU8::make(lm.width, lm.height, 1);
  for (size_t i = 0; i < lm.labels.size(); ++i)
    img.pixels[i] = static_cast<uint8_t>(lm.labels[i]);
  write_png(path, img);
}

MaskTensor mask_provider(const MaskProviderConfig& cfg, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw DimensionError(strcat_msg("mask_provider: expected image [3,H,W], got ",
                                    shape_str(image.shape())));
  if (cfg.source == MaskSource::Fh)
    return encode_mask(fh_segment(image, cfg.fh), cfg.channels);

  LabelMap lm = read_label_png(cfg.file_path);
  if (lm.height != image.dim(1) || lm.width != image.dim(2))
    throw InputError(strcat_msg("mask file ", cfg.file_path, " is ", lm.width, "x", lm.height,
                                ", image is ", image.dim(2), "x", image.dim(1)));
  return encode_mask(lm, cfg.channels);
}

}  // namespace repaint
