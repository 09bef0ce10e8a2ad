#pragma once

#include <string>

#include "repaint/data.hpp"
#include "repaint/losses.hpp"
#include "repaint/networks.hpp"
#include "repaint/segmentation.hpp"
#include "repaint/trainer_config.hpp"

namespace repaint {

// Fully-resolved run configuration: defaults overlaid with the JSON config
// file, overlaid with explicit CLI flags.
struct RunConfig {
  uint64_t seed = 0;
  int resolution = 32;

  SynthConfig data;
  std::string data_dir;  // when set, load this dataset instead of generating

  FHParams fh;               // mask-provider segmentation
  MaskSource mask_source = MaskSource::Fh;
  int mask_channels = 16;

  NetConfig net;
  LossWeights loss;
  GanForm gan_form = GanForm::NonSaturating;
  TrainConfig trainer;

  // Evaluation settings (shape-preservation probe).
  int eval_shape_images = 64;
  int eval_repaints = 3;
  FHParams metric_fh{3.0, 0.8, 64};

  uint64_t config_hash = 0;  // over the resolved canonical JSON

  void validate() const;
  std::string to_json() const;  // canonical (sorted keys), resolved values
};

// Parses a JSON object; unknown keys anywhere raise ConfigError naming the
// key, as do type mismatches. An empty object yields all defaults.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config_file(const std::string& path);

uint64_t hash_config_text(const std::string& canonical_json);

}  // namespace repaint
