#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>

#include "repaint/segmentation.hpp"
#include "repaint/tensor.hpp"

namespace repaint {

struct EvalReport {
  double top1 = 0.0;
  std::optional<double> shape_preservation_ari;      // mean over images and repaints
  std::optional<double> shape_preservation_ari_std;  // std over images
  std::optional<double> shuffled_pair_ari;           // derangement baseline
  std::optional<double> repaint_diversity_l1;        // mean pairwise L1 of repaints
  std::optional<double> texture_bias;
  std::optional<double> cue_conflict_shape_acc;
  int64_t n = 0;

  std::string to_json() const;
};

// Fraction of rows whose argmax equals the label; ties resolved to the
// lowest index. InputError on an empty set.
double top1(const Tensor& logits, std::span<const int64_t> labels);

// Adjusted Rand index between two pixel partitions, in [-1,1]. When both
// partitions are a single cluster the index is defined as 1; when exactly
// one is, as 0.
double ari(const LabelMap& a, const LabelMap& b);

struct ShapePreservation {
  double mean_ari = 0.0;
  double std_ari = 0.0;       // over per-image means
  double shuffled_mean = 0.0;  // ari(FH(x_i), FH(repaint(x_{i+1})))
  double diversity_l1 = 0.0;   // mean pairwise L1 distance between repaints
};

// repaint(image, repeat) must return a same-shape image in [-1,1]; images
// are given in [-1,1] and converted to [0,1] for FH internally.
using RepaintFn = std::function<Tensor(const Tensor& image, int repeat)>;

ShapePreservation shape_preservation(const RepaintFn& repaint, std::span<const Tensor> images,
                                     const FHParams& fh, int n_repaints = 3);

// Over cue-conflict samples whose prediction matches either label, the
// fraction predicting the texture label. DomainError when no prediction
// matches either label.
double texture_bias(std::span<const int64_t> predictions, std::span<const int64_t> shape_labels,
                    std::span<const int64_t> texture_labels);

// Companion score: fraction of all cue-conflict samples classified by shape.
double shape_accuracy(std::span<const int64_t> predictions,
                      std::span<const int64_t> shape_labels);

std::vector<int64_t> argmax_rows(const Tensor& logits);

}  // namespace repaint
