#include "repaint/metrics.hpp"

#include <cmath>

#include "repaint/common.hpp"
#include "repaint/data.hpp"

#include "json.hpp"

namespace repaint {

std::vector<int64_t> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("argmax_rows: expected [N,C]");
  const int64_t n = logits.dim(0), c = logits.dim(1);
  const std::vector<double> v = logits.to_vector();
  std::vector<int64_t> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    int64_t best = 0;
    double bv = v[static_cast<size_t>(i * c)];
    for (int64_t j = 1; j < c; ++j)
      if (v[static_cast<size_t>(i * c + j)] > bv) {
        bv = v[static_cast<size_t>(i * c + j)];
        best = j;
      }
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

double top1(const Tensor& logits, std::span<const int64_t> labels) {
  if (logits.rank() != 2 || logits.dim(0) == 0) throw InputError("top1: empty logits set");
  if (static_cast<int64_t>(labels.size()) != logits.dim(0))
    throw DimensionError(strcat_msg("top1: ", labels.size(), " labels for ", logits.dim(0),
                                    " rows"));
  const std::vector<int64_t> pred = argmax_rows(logits);
  int64_t correct = 0;
  for (size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

double ari(const LabelMap& a, const LabelMap& b) {
  if (a.width != b.width || a.height != b.height)
    throw DimensionError(strcat_msg("ari: dimension mismatch ", a.width, "x", a.height, " vs ",
                                    b.width, "x", b.height));
  const int64_t n = static_cast<int64_t>(a.labels.size());
  if (n == 0) throw DimensionError("ari: empty label maps");
  const int ka = a.num_segments(), kb = b.num_segments();
  if (ka == 1 && kb == 1) return 1.0;
  if (ka == 1 || kb == 1) return 0.0;

  std::vector<int64_t> cont(static_cast<size_t>(ka) * kb, 0);
  std::vector<int64_t> ra(static_cast<size_t>(ka), 0), rb(static_cast<size_t>(kb), 0);
  for (int64_t i = 0; i < n; ++i) {
    const int32_t la = a.labels[static_cast<size_t>(i)];
    const int32_t lb = b.labels[static_cast<size_t>(i)];
    ++cont[static_cast<size_t>(la) * kb + lb];
    ++ra[static_cast<size_t>(la)];
    ++rb[static_cast<size_t>(lb)];
  }
  auto comb2 = [](int64_t m) { return m * (m - 1) / 2; };
  double index = 0, sum_a = 0, sum_b = 0;
  for (int64_t v : cont) index += static_cast<double>(comb2(v));
  for (int64_t v : ra) sum_a += static_cast<double>(comb2(v));
  for (int64_t v : rb) sum_b += static_cast<double>(comb2(v));
  const double total = static_cast<double>(comb2(n));
  const double expected = sum_a * sum_b / total;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;  // identical marginal structure edge case
  return (index - expected) / (max_index - expected);
}

ShapePreservation shape_preservation(const RepaintFn& repaint, std::span<const Tensor> images,
                                     const FHParams& fh, int n_repaints) {
  if (images.size() < 2)
    throw InputError("shape_preservation: need at least 2 images for the shuffled baseline");
  if (n_repaints < 1) throw ContractError("shape_preservation: n_repaints must be >= 1");

  const size_t n = images.size();
  std::vector<LabelMap> original_seg(n);
  std::vector<LabelMap> first_repaint_seg(n);
  std::vector<double> image_means(n, 0.0);
  double total = 0, diversity = 0;
  int64_t diversity_pairs = 0;

  for (size_t i = 0; i < n; ++i) {
    original_seg[i] = fh_segment(model_to_unit(images[i]), fh);
    std::vector<Tensor> repaints;
    double acc = 0;
    for (int r = 0; r < n_repaints; ++r) {
      Tensor rp = repaint(images[i], r);
      LabelMap seg = fh_segment(model_to_unit(rp), fh);
      if (r == 0) first_repaint_seg[i] = seg;
      acc += ari(original_seg[i], seg);
      repaints.push_back(std::move(rp));
    }
    image_means[i] = acc / n_repaints;
    total += image_means[i];
    for (size_t p = 0; p < repaints.size(); ++p)
      for (size_t q = p + 1; q < repaints.size(); ++q) {
        diversity += mean(abs(sub(repaints[p], repaints[q]))).item();
        ++diversity_pairs;
      }
  }

  ShapePreservation out;
  out.mean_ari = total / static_cast<double>(n);
  double var = 0;
  for (double m : image_means) var += (m - out.mean_ari) * (m - out.mean_ari);
  out.std_ari = std::sqrt(var / static_cast<double>(n));
  // Cyclic shift is a derangement: every image pairs with a different one.
  double shuffled = 0;
  for (size_t i = 0; i < n; ++i) shuffled += ari(original_seg[i], first_repaint_seg[(i + 1) % n]);
  out.shuffled_mean = shuffled / static_cast<double>(n);
  out.diversity_l1 = diversity_pairs > 0 ? diversity / static_cast<double>(diversity_pairs) : 0.0;
  return out;
}

double texture_bias(std::span<const int64_t> predictions, std::span<const int64_t> shape_labels,
                    std::span<const int64_t> texture_labels) {
  if (predictions.size() != shape_labels.size() || predictions.size() != texture_labels.size())
    throw DimensionError("texture_bias: label arrays must have equal length");
  int64_t texture_hits = 0, decided = 0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    if (shape_labels[i] == texture_labels[i])
      throw ContractError(strcat_msg("texture_bias: sample ", i,
                                     " has matching shape and texture labels"));
    if (predictions[i] == texture_labels[i]) {
      ++texture_hits;
      ++decided;
    } else if (predictions[i] == shape_labels[i]) {
      ++decided;
    }
  }
  if (decided == 0)
    throw DomainError("texture_bias: undefined, no prediction matched either label");
  return static_cast<double>(texture_hits) / static_cast<double>(decided);
}

double shape_accuracy(std::span<const int64_t> predictions,
                      std::span<const int64_t> shape_labels) {
  if (predictions.empty()) throw InputError("shape_accuracy: empty prediction set");
  int64_t hits = 0;
  for (size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == shape_labels[i];
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["top1"] = top1;
  j["n"] = n;
  auto set = [&](const char* key, const std::optional<double>& v) {
    if (v)
      j[key] = *v;
    else
      j[key] = nullptr;
  };
  set("shape_preservation_ari", shape_preservation_ari);
  set("shape_preservation_ari_std", shape_preservation_ari_std);
  set("shuffled_pair_ari", shuffled_pair_ari);
  set("repaint_diversity_l1", repaint_diversity_l1);
  set("texture_bias", texture_bias);
  set("cue_conflict_shape_acc", cue_conflict_shape_acc);
  return j.dump(2);
}

}  // namespace repaint
