#include "repaint/config.hpp"

#include <fstream>
#include <set>

#include "repaint/rng.hpp"

#include "json.hpp"

namespace repaint {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::set<std::string>& known, const std::string& scope) {
  for (const auto& [key, _] : obj.items())
    if (!known.count(key))
      throw ConfigError(strcat_msg("unknown config key \"", scope.empty() ? key : scope + "." + key,
                                   "\""));
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& scope) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(strcat_msg("config key \"", scope.empty() ? key : scope + "." + key,
                                 "\" has the wrong type"));
  }
}

GanForm parse_gan_form(const std::string& s) {
  if (s == "nonsaturating") return GanForm::NonSaturating;
  if (s == "minimax") return GanForm::Minimax;
  throw ConfigError(strcat_msg("gan_form must be \"nonsaturating\" or \"minimax\", got \"", s,
                               "\""));
}

Ablation parse_mode(const std::string& s) {
  if (s == "full") return Ablation::Full;
  if (s == "frozen-g" || s == "frozen_g") return Ablation::RepaintFrozenG;
  if (s == "baseline") return Ablation::Baseline;
  throw ConfigError(strcat_msg("mode must be \"full\", \"frozen-g\" or \"baseline\", got \"", s,
                               "\""));
}

std::string mode_name(Ablation a) {
  switch (a) {
    case Ablation::Full:
      return "full";
    case Ablation::RepaintFrozenG:
      return "frozen-g";
    default:
      return "baseline";
  }
}

}  // namespace

void RunConfig::validate() const {
  data.validate();
  trainer.validate();
  loss.validate();
  if (mask_channels < 2) throw ConfigError("mask.channels must be >= 2");
  if (!(fh.k > 0) || fh.sigma < 0 || fh.min_size < 1)
    throw ConfigError("fh: require k > 0, sigma >= 0, min_size >= 1");
  if (eval_shape_images < 2) throw ConfigError("eval.shape_images must be >= 2");
  if (eval_repaints < 1) throw ConfigError("eval.repaints must be >= 1");
  if (resolution < 16 || resolution % 16 != 0)
    throw ConfigError(strcat_msg("resolution must be a positive multiple of 16, got ",
                                 resolution));
}

RunConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(strcat_msg("invalid JSON config: ", e.what()));
  }
  if (!root.is_object()) throw ConfigError("config must be a JSON object");

  RunConfig cfg;
  check_keys(root, {"seed", "resolution", "data", "fh", "mask", "loss", "net", "trainer", "eval"},
             "");
  read(root, "seed", cfg.seed, "");
  read(root, "resolution", cfg.resolution, "");

  if (root.contains("data")) {
    const json& d = root.at("data");
    check_keys(d,
               {"num_shape_classes", "num_textures", "train_correlation", "train_count",
                "val_count", "cue_conflict_count", "data_fraction", "dir"},
               "data");
    read(d, "num_shape_classes", cfg.data.num_shape_classes, "data");
    read(d, "num_textures", cfg.data.num_textures, "data");
    read(d, "train_correlation", cfg.data.train_correlation, "data");
    read(d, "train_count", cfg.data.train_count, "data");
    read(d, "val_count", cfg.data.val_count, "data");
    read(d, "cue_conflict_count", cfg.data.cue_conflict_count, "data");
    read(d, "data_fraction", cfg.data.data_fraction, "data");
    read(d, "dir", cfg.data_dir, "data");
  }
  if (root.contains("fh")) {
    const json& d = root.at("fh");
    check_keys(d, {"k", "sigma", "min_size"}, "fh");
    read(d, "k", cfg.fh.k, "fh");
    read(d, "sigma", cfg.fh.sigma, "fh");
    read(d, "min_size", cfg.fh.min_size, "fh");
  }
  if (root.contains("mask")) {
    const json& d = root.at("mask");
    check_keys(d, {"source", "channels"}, "mask");
    std::string source = "fh";
    read(d, "source", source, "mask");
    if (source == "fh")
      cfg.mask_source = MaskSource::Fh;
    else if (source == "file")
      cfg.mask_source = MaskSource::File;
    else
      throw ConfigError(strcat_msg("mask.source must be \"fh\" or \"file\", got \"", source,
                                   "\""));
    read(d, "channels", cfg.mask_channels, "mask");
  }
  if (root.contains("loss")) {
    const json& d = root.at("loss");
    check_keys(d, {"lambda_gan", "lambda_feat", "lambda_kld", "lambda_task", "gan_form"}, "loss");
    read(d, "lambda_gan", cfg.loss.lambda_gan, "loss");
    read(d, "lambda_feat", cfg.loss.lambda_feat, "loss");
    read(d, "lambda_kld", cfg.loss.lambda_kld, "loss");
    read(d, "lambda_task", cfg.loss.lambda_task, "loss");
    std::string form = "nonsaturating";
    read(d, "gan_form", form, "loss");
    cfg.gan_form = parse_gan_form(form);
  }
  if (root.contains("net")) {
    const json& d = root.at("net");
    check_keys(d, {"dz", "gen_base_channels", "spade_hidden"}, "net");
    read(d, "dz", cfg.net.dz, "net");
    read(d, "gen_base_channels", cfg.net.gen_base_channels, "net");
    read(d, "spade_hidden", cfg.net.spade_hidden, "net");
  }
  if (root.contains("trainer")) {
    const json& d = root.at("trainer");
    check_keys(d,
               {"total_epochs", "repaint_phase_fraction", "batch_size", "lr_g", "lr_d",
                "adam_beta1", "adam_beta2", "task_lr0", "task_lr_decay", "task_lr_decay_epochs",
                "rmsprop_alpha", "mode", "orig_mix_prob", "clip_norm"},
               "trainer");
    read(d, "total_epochs", cfg.trainer.total_epochs, "trainer");
    read(d, "repaint_phase_fraction", cfg.trainer.repaint_phase_fraction, "trainer");
    read(d, "batch_size", cfg.trainer.batch_size, "trainer");
    read(d, "lr_g", cfg.trainer.lr_g, "trainer");
    read(d, "lr_d", cfg.trainer.lr_d, "trainer");
    read(d, "adam_beta1", cfg.trainer.adam_beta1, "trainer");
    read(d, "adam_beta2", cfg.trainer.adam_beta2, "trainer");
    read(d, "task_lr0", cfg.trainer.task_lr0, "trainer");
    read(d, "task_lr_decay", cfg.trainer.task_lr_decay, "trainer");
    read(d, "task_lr_decay_epochs", cfg.trainer.task_lr_decay_epochs, "trainer");
    read(d, "rmsprop_alpha", cfg.trainer.rmsprop_alpha, "trainer");
    read(d, "orig_mix_prob", cfg.trainer.orig_mix_prob, "trainer");
    read(d, "clip_norm", cfg.trainer.clip_norm, "trainer");
    std::string mode = "full";
    read(d, "mode", mode, "trainer");
    cfg.trainer.ablation = parse_mode(mode);
  }
  if (root.contains("eval")) {
    const json& d = root.at("eval");
    check_keys(d, {"shape_images", "repaints", "fh_k", "fh_sigma", "fh_min_size"}, "eval");
    read(d, "shape_images", cfg.eval_shape_images, "eval");
    read(d, "repaints", cfg.eval_repaints, "eval");
    read(d, "fh_k", cfg.metric_fh.k, "eval");
    read(d, "fh_sigma", cfg.metric_fh.sigma, "eval");
    read(d, "fh_min_size", cfg.metric_fh.min_size, "eval");
  }

  // Mirror shared fields into the sub-configs.
  cfg.data.resolution = cfg.resolution;
  cfg.data.seed = cfg.seed;
  cfg.net.resolution = cfg.resolution;
  cfg.net.num_classes = cfg.data.num_shape_classes;
  cfg.net.mask_channels = cfg.mask_channels;

  cfg.validate();
  cfg.config_hash = hash_config_text(cfg.to_json());
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError(strcat_msg("cannot open config file: ", path));
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_config(text);
}

std::string RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["resolution"] = resolution;
  j["data"] = {{"num_shape_classes", data.num_shape_classes},
               {"num_textures", data.num_textures},
               {"train_correlation", data.train_correlation},
               {"train_count", data.train_count},
               {"val_count", data.val_count},
               {"cue_conflict_count", data.cue_conflict_count},
               {"data_fraction", data.data_fraction},
               {"dir", data_dir}};
  j["fh"] = {{"k", fh.k}, {"sigma", fh.sigma}, {"min_size", fh.min_size}};
  j["mask"] = {{"source", mask_source == MaskSource::Fh ? "fh" : "file"},
               {"channels", mask_channels}};
  j["loss"] = {{"lambda_gan", loss.lambda_gan},
               {"lambda_feat", loss.lambda_feat},
               {"lambda_kld", loss.lambda_kld},
               {"lambda_task", loss.lambda_task},
               {"gan_form", gan_form == GanForm::NonSaturating ? "nonsaturating" : "minimax"}};
  j["net"] = {{"dz", net.dz},
              {"gen_base_channels", net.gen_base_channels},
              {"spade_hidden", net.spade_hidden}};
  j["trainer"] = {{"total_epochs", trainer.total_epochs},
                  {"repaint_phase_fraction", trainer.repaint_phase_fraction},
                  {"batch_size", trainer.batch_size},
                  {"lr_g", trainer.lr_g},
                  {"lr_d", trainer.lr_d},
                  {"adam_beta1", trainer.adam_beta1},
                  {"adam_beta2", trainer.adam_beta2},
                  {"task_lr0", trainer.task_lr0},
                  {"task_lr_decay", trainer.task_lr_decay},
                  {"task_lr_decay_epochs", trainer.task_lr_decay_epochs},
                  {"rmsprop_alpha", trainer.rmsprop_alpha},
                  {"mode", mode_name(trainer.ablation)},
                  {"orig_mix_prob", trainer.orig_mix_prob},
                  {"clip_norm", trainer.clip_norm}};
  j["eval"] = {{"shape_images", eval_shape_images},
               {"repaints", eval_repaints},
               {"fh_k", metric_fh.k},
               {"fh_sigma", metric_fh.sigma},
               {"fh_min_size", metric_fh.min_size}};
  return j.dump(2);  // nlohmann objects iterate sorted, so this is canonical
}

uint64_t hash_config_text(const std::string& canonical_json) {
  // FNV-1a 64 with a final mix.
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : canonical_json) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return mix64(h);
}

}  // namespace repaint
