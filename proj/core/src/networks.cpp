#include "repaint/networks.hpp"

#include <cmath>

#include "repaint/data.hpp"

namespace repaint {

namespace {
void check_resolution(int res) {
  if (res < 16 || res % 16 != 0)
    throw DimensionError(strcat_msg("spatial size ", res, " not divisible by 16"));
}
}  // namespace

Encoder::Encoder(const NetConfig& cfg_, Rng& rng) : cfg(cfg_) {
  check_resolution(cfg.resolution);
  const int64_t widths[] = {3, 32, 64, 128, 256};
  for (int i = 0; i < 4; ++i) {
    convs.emplace_back(widths[i], widths[i + 1], 3, 2, 1, rng, cfg.dtype, cfg.leaky_slope);
    norms.emplace_back(widths[i + 1], cfg.dtype, cfg.bn_eps, cfg.bn_momentum);
  }
  const int64_t spatial = cfg.resolution / 16;
  const int64_t flat = 256 * spatial * spatial;
  mu_head = LinearLayer(flat, cfg.dz, rng, cfg.dtype);
  logvar_head = LinearLayer(flat, cfg.dz, rng, cfg.dtype);
}

std::pair<Tensor, Tensor> Encoder::forward(const Tensor& image, Mode mode) {
  if (image.rank() != 4) throw DimensionError("encoder: expected [B,3,H,W]");
  if (image.dim(2) % 16 != 0 || image.dim(3) % 16 != 0)
    throw DimensionError(strcat_msg("encoder: spatial size ", image.dim(2), "x", image.dim(3),
                                    " not divisible by 16"));
  Tensor h = image;
  for (size_t i = 0; i < convs.size(); ++i)
    h = leaky_relu(norms[i].forward(convs[i].forward(h), mode), cfg.leaky_slope);
  h = reshape(h, {h.dim(0), h.dim(1) * h.dim(2) * h.dim(3)});
  return {mu_head.forward(h), logvar_head.forward(h)};
}

void Encoder::visit_params(const std::string& prefix, const TensorVisitor& fn) {
  for (size_t i = 0; i < convs.size(); ++i) {
    convs[i].visit_params(join_name(prefix, "conv" + std::to_string(i)), fn);
    norms[i].visit_params(join_name(prefix, "norm" + std::to_string(i)), fn);
  }
  mu_head.visit_params(join_name(prefix, "mu"), fn);
  logvar_head.visit_params(join_name(prefix, "logvar"), fn);
}

void Encoder::visit_buffers(const std::string& prefix, const TensorVisitor& fn) {
  for (size_t i = 0; i < norms.size(); ++i)
    norms[i].visit_buffers(join_name(prefix, "norm" + std::to_string(i)), fn);
}

Tensor reparameterize(const Tensor& mu, const Tensor& logvar, const Tensor& noise) {
  if (mu.shape() != logvar.shape() || mu.shape() != noise.shape())
    throw DimensionError(strcat_msg("reparameterize: shape mismatch mu ", shape_str(mu.shape()),
                                    " logvar ", shape_str(logvar.shape()), " noise ",
                                    shape_str(noise.shape())));
  return add(mu, mul(exp(affine(logvar, 0.5, 0.0)), noise.detach()));
}

Generator::Generator(const NetConfig& cfg_, Rng& rng) : cfg(cfg_) {
  check_resolution(cfg.resolution);
  const int64_t base = cfg.gen_base_channels;
  fc = LinearLayer(cfg.dz, base * 4 * 4, rng, cfg.dtype);
  int64_t ch = base;
  for (int r = 4; r < cfg.resolution; r *= 2) {
    const int64_t next = std::max<int64_t>(ch / 2, 32);
    blocks.emplace_back(ch, next, cfg.mask_channels, cfg.spade_hidden, rng, cfg.dtype);
    ch = next;
  }
  out_spade = SpadeLayer(ch, cfg.mask_channels, cfg.spade_hidden, rng, cfg.dtype, cfg.bn_eps,
                         cfg.bn_momentum);
  out_conv = Conv2dLayer(ch, 3, 3, 1, 1, rng, cfg.dtype);
}

std::vector<int> Generator::mask_resolutions() const {
  std::vector<int> res;
  for (int r = 4; r <= cfg.resolution; r *= 2) res.push_back(r);
  return res;
}

Tensor Generator::forward(const Tensor& z, std::span<const Tensor> masks, Mode mode) {
  if (z.rank() != 2 || z.dim(1) != cfg.dz)
    throw DimensionError(strcat_msg("generator: expected z [B,", cfg.dz, "], got ",
                                    shape_str(z.shape())));
  const auto res = mask_resolutions();
  if (masks.size() != res.size())
    throw ConfigError(strcat_msg("generator: ", masks.size(), " mask resolutions supplied, need ",
                                 res.size()));
  for (size_t i = 0; i < res.size(); ++i)
    if (masks[i].dim(2) != res[i] || masks[i].dim(3) != res[i])
      throw ConfigError(strcat_msg("generator: mask ", i, " is ", masks[i].dim(2), "x",
                                   masks[i].dim(3), ", expected ", res[i], "x", res[i]));

  Tensor h = reshape(fc.forward(z), {z.dim(0), cfg.gen_base_channels, 4, 4});
  for (size_t i = 0; i < blocks.size(); ++i) {
    h = blocks[i].forward(h, masks[i], mode);
    h = upsample_nearest2x(h);
  }
  h = leaky_relu(out_spade.forward(h, masks.back(), mode), cfg.leaky_slope);
  return tanh(out_conv.forward(h));
}

void Generator::visit_params(const std::string& prefix, const TensorVisitor& fn) {
  fc.visit_params(join_name(prefix, "fc"), fn);
  for (size_t i = 0; i < blocks.size(); ++i)
    blocks[i].visit_params(join_name(prefix, "block" + std::to_string(i)), fn);
  out_spade.visit_params(join_name(prefix, "out_spade"), fn);
  out_conv.visit_params(join_name(prefix, "out_conv"), fn);
}

void Generator::visit_buffers(const std::string& prefix, const TensorVisitor& fn) {
  for (size_t i = 0; i < blocks.size(); ++i)
    blocks[i].visit_buffers(join_name(prefix, "block" + std::to_string(i)), fn);
  out_spade.visit_buffers(join_name(prefix, "out_spade"), fn);
}

PatchDiscriminator::PatchDiscriminator(const NetConfig& cfg_, Rng& rng) : cfg(cfg_) {
  const int64_t widths[] = {3 + cfg.mask_channels, 64, 128, 256};
  for (int i = 0; i < 3; ++i)
    convs.emplace_back(widths[i], widths[i + 1], 3, 2, 1, rng, cfg.dtype, cfg.leaky_slope);
  head = Conv2dLayer(256, 1, 1, 1, 0, rng, cfg.dtype);
}

PatchDiscriminator::Output PatchDiscriminator::forward(const Tensor& image, const Tensor& mask) {
  if (image.rank() != 4 || mask.rank() != 4 || image.dim(0) != mask.dim(0) ||
      image.dim(2) != mask.dim(2) || image.dim(3) != mask.dim(3))
    throw DimensionError(strcat_msg("discriminator: image ", shape_str(image.shape()),
                                    " and mask ", shape_str(mask.shape()),
                                    " must share batch and spatial size"));
  Output out;
  Tensor h = concat_channels(image, mask);
  for (auto& conv : convs) {
    h = leaky_relu(conv.forward(h), cfg.leaky_slope);
    out.features.push_back(h);
  }
  out.logits = head.forward(h);
  return out;
}

void PatchDiscriminator::visit_params(const std::string& prefix, const TensorVisitor& fn) {
  for (size_t i = 0; i < convs.size(); ++i)
    convs[i].visit_params(join_name(prefix, "conv" + std::to_string(i)), fn);
  head.visit_params(join_name(prefix, "head"), fn);
}

TaskNet::TaskNet(const NetConfig& cfg_, Rng& rng) : cfg(cfg_) {
  const int64_t widths[] = {3, 32, 64, 128};
  for (int i = 0; i < 3; ++i) {
    convs.emplace_back(widths[i], widths[i + 1], 3, 2, 1, rng, cfg.dtype, 0.0);
    norms.emplace_back(widths[i + 1], cfg.dtype, cfg.bn_eps, cfg.bn_momentum);
  }
  head = LinearLayer(128, cfg.num_classes, rng, cfg.dtype, 0.0);
}

Tensor TaskNet::forward(const Tensor& image, Mode mode) {
  Tensor h = image;
  for (size_t i = 0; i < convs.size(); ++i)
    h = relu(norms[i].forward(convs[i].forward(h), mode));
  return head.forward(global_avg_pool(h));
}

void TaskNet::visit_params(const std::string& prefix, const TensorVisitor& fn) {
  for (size_t i = 0; i < convs.size(); ++i) {
    convs[i].visit_params(join_name(prefix, "conv" + std::to_string(i)), fn);
    norms[i].visit_params(join_name(prefix, "norm" + std::to_string(i)), fn);
  }
  head.visit_params(join_name(prefix, "head"), fn);
}

void TaskNet::visit_buffers(const std::string& prefix, const TensorVisitor& fn) {
  for (size_t i = 0; i < norms.size(); ++i)
    norms[i].visit_buffers(join_name(prefix, "norm" + std::to_string(i)), fn);
}

std::vector<Tensor> masks_for_generator(const Generator& gen,
                                        std::span<const MaskTensor> masks, DType dt) {
  std::vector<Tensor> out;
  for (int r : gen.mask_resolutions()) {
    std::vector<MaskTensor> resized;
    resized.reserve(masks.size());
    for (const MaskTensor& m : masks) resized.push_back(resize_mask(m, r, r));
    out.push_back(stack_masks(resized, dt));
  }
  return out;
}

Tensor repaint_batch(Encoder& enc, Generator& gen, const Tensor& images,
                     std::span<const Tensor> gen_masks, const Tensor& noise, Mode mode) {
  auto [mu, logvar] = enc.forward(images, mode);
  Tensor z = reparameterize(mu, logvar, noise);
  return gen.forward(z, gen_masks, mode);
}

Tensor repaint_single(Encoder& enc, Generator& gen, const Tensor& image,
                      const MaskProviderConfig& mask_cfg, Rng& rng, Mode mode) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw DimensionError(strcat_msg("repaint: expected image [3,H,W], got ",
                                    shape_str(image.shape())));
  MaskTensor mask = mask_provider(mask_cfg, model_to_unit(image));
  std::vector<MaskTensor> one{std::move(mask)};
  std::vector<Tensor> gen_masks = masks_for_generator(gen, one, image.dtype());
  Tensor batch = reshape(image.detach(), {1, 3, image.dim(1), image.dim(2)});
  Tensor noise = randn({1, gen.cfg.dz}, rng, image.dtype());
  Tensor out = repaint_batch(enc, gen, batch, gen_masks, noise, mode);
  return reshape(out.detach(), {3, image.dim(1), image.dim(2)});
}

}  // namespace repaint
