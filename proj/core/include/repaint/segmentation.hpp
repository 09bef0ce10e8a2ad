#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "repaint/tensor.hpp"

namespace repaint {

// Per-pixel segment labeling; ids are contiguous from 0 and ordered by
// decreasing segment size (ties by smallest member pixel index).
struct LabelMap {
  int width = 0;
  int height = 0;
  std::vector<int32_t> labels;  // row-major, height*width

  int32_t at(int y, int x) const { return labels[static_cast<size_t>(y) * width + x]; }
  int num_segments() const;
};

// Felzenszwalb-Huttenlocher parameters; tau(C) = k / |C|.
struct FHParams {
  double k = 1.18;     // merge threshold scale, on [0,1]-ranged images
  double sigma = 0.8;  // Gaussian pre-smoothing std in pixels
  int min_size = 20;   // minimum final segment pixel count
};

// Graph-based segmentation over the 8-connected pixel graph with Euclidean
// RGB edge weights after Gaussian smoothing. Components merge when the
// joining edge weight is <= min(Int(C1)+tau(C1), Int(C2)+tau(C2)), edges in
// ascending (weight, pixel index) order; a second pass absorbs components
// below min_size into their lowest-weight neighbor.
LabelMap fh_segment(const Tensor& image, const FHParams& params);

// Separable Gaussian blur, kernel truncated at 4*sigma, reflected borders.
// Identity when sigma == 0.
Tensor gaussian_smooth(const Tensor& image, double sigma);

// Fixed-channel one-hot conditioning map: exactly one channel active per
// pixel, channel 0 = largest segment.
struct MaskTensor {
  int channels = 0;
  Tensor map;  // [K,H,W], values {0,1}

  int height() const { return static_cast<int>(map.dim(1)); }
  int width() const { return static_cast<int>(map.dim(2)); }
};

// The K-1 largest segments get dedicated channels (size order, ties by
// smaller label); everything else shares channel K-1.
MaskTensor encode_mask(const LabelMap& labels, int channels, DType dt = DType::F32);

// Nearest-neighbor resample of the underlying label assignment.
MaskTensor resize_mask(const MaskTensor& mask, int out_h, int out_w);
LabelMap resize_labels(const LabelMap& lm, int out_h, int out_w);

// Recover per-pixel channel indices from a one-hot mask.
LabelMap mask_to_labels(const MaskTensor& mask);

// Stack per-sample masks into a [B,K,H,W] batch tensor.
Tensor stack_masks(std::span<const MaskTensor> masks, DType dt = DType::F32);

enum class MaskSource { Fh, File };

struct MaskProviderConfig {
  MaskSource source = MaskSource::Fh;
  FHParams fh;
  int channels = 16;
  std::string file_path;  // file source: 8-bit label PNG (pixel value = id)
};

// image: [3,H,W] in [0,1]. The file branch validates dimensions against the
// image and remaps stored ids to contiguous labels before encoding.
MaskTensor mask_provider(const MaskProviderConfig& cfg, const Tensor& image);

// Label PNG ingestion shared by mask_provider and the dataset loader.
LabelMap read_label_png(const std::string& path);
void write_label_png(const std::string& path, const LabelMap& lm);

}  // namespace repaint
