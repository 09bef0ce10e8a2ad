#pragma once

#include <optional>
#include <string>
#include <vector>

#include "repaint/image_io.hpp"
#include "repaint/segmentation.hpp"
#include "repaint/tensor.hpp"

namespace repaint {

// Synthetic shape-vs-texture dataset. Every image is one filled shape over a
// textured background; the shape class is the prediction target and the
// interior texture is a deliberately learnable shortcut whose correlation
// with the class is controlled by train_correlation.
struct SynthConfig {
  int resolution = 32;
  int num_shape_classes = 4;  // circle, square, triangle, cross
  int num_textures = 4;       // h-stripes, v-stripes, dots, checker
  double train_correlation = 1.0;
  int train_count = 2000;
  int val_count = 500;
  int cue_conflict_count = 500;
  uint64_t seed = 0;
  double data_fraction = 1.0;

  void validate() const;
};

struct Sample {
  Tensor image;  // [3,H,W] in [-1,1]
  int64_t shape_label = 0;
  int64_t texture_label = -1;  // -1 when unknown (external datasets)
  LabelMap gt_mask;            // 0 = background, 1 = shape
  bool has_mask = false;
};

struct SampleSet {
  std::vector<Sample> items;
  size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }
};

struct Dataset {
  SampleSet train, val, cue_conflict;
};

Dataset gen_dataset(const SynthConfig& cfg);

// u8 [0,255] -> [-1,1] and back; the inverse clamps then rounds so the
// round trip over u8 is the identity.
Tensor to_model_range(const ImageU8& img, DType dt = DType::F32);
ImageU8 from_model_range(const Tensor& image);

Tensor unit_to_model(const Tensor& image01);  // [0,1] -> [-1,1]
Tensor model_to_unit(const Tensor& image);    // clamped inverse

// Directory layout: *.png + labels.csv (filename,shape_label[,texture_label])
// + optional masks/<filename> 8-bit label PNGs.
SampleSet load_image_dir(const std::string& dir, int resolution);
Dataset load_dataset_dir(const std::string& root, int resolution);  // train/ val/ cue_conflict/
void export_sample_set(const SampleSet& set, const std::string& dir);
void export_dataset(const Dataset& ds, const std::string& root);

// Deterministic class-balanced subset of the first round(fraction*N) samples.
SampleSet subsample_fraction(const SampleSet& set, double fraction, int num_classes);

// Analytic area of the rendered shape for a given size parameter, in px^2.
double shape_area(int shape_class, double scale);

}  // namespace repaint
