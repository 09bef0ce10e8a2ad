#pragma once

#include <vector>

#include "repaint/spade.hpp"

namespace repaint {

struct NetConfig {
  int resolution = 32;        // must be divisible by 16
  int num_classes = 4;
  int mask_channels = 16;
  int64_t dz = 64;
  int64_t gen_base_channels = 256;
  int64_t spade_hidden = 64;
  double leaky_slope = 0.2;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  DType dtype = DType::F32;
};

// E: 4 stride-2 conv blocks (3->32->64->128->256) with per-channel
// normalization, then two linear heads for the variational posterior.
struct Encoder {
  NetConfig cfg;
  std::vector<Conv2dLayer> convs;
  std::vector<BatchNorm2d> norms;
  LinearLayer mu_head, logvar_head;

  Encoder() = default;
  Encoder(const NetConfig& cfg, Rng& rng);

  // image: [B,3,H,W] in [-1,1], H and W divisible by 16.
  std::pair<Tensor, Tensor> forward(const Tensor& image, Mode mode);

  void visit_params(const std::string& prefix, const TensorVisitor& fn);
  void visit_buffers(const std::string& prefix, const TensorVisitor& fn);
};

// z = mu + exp(0.5*logvar) * noise; gradient flows to mu/logvar only.
Tensor reparameterize(const Tensor& mu, const Tensor& logvar, const Tensor& noise);

// G: linear to a 4x4 seed map, SPD-Res blocks with x2 nearest upsampling,
// then a final SPADE-conditioned conv + tanh at full resolution.
struct Generator {
  NetConfig cfg;
  LinearLayer fc;
  std::vector<SpdResBlock> blocks;
  SpadeLayer out_spade;
  Conv2dLayer out_conv;

  Generator() = default;
  Generator(const NetConfig& cfg, Rng& rng);

  // One mask resolution per SPADE stage: 4,8,...,resolution.
  std::vector<int> mask_resolutions() const;

  // z: [B,dz]; masks: one [B,K,r,r] tensor per entry of mask_resolutions().
  Tensor forward(const Tensor& z, std::span<const Tensor> masks, Mode mode);

  void visit_params(const std::string& prefix, const TensorVisitor& fn);
  void visit_buffers(const std::string& prefix, const TensorVisitor& fn);
};

// D: mask-conditioned patch discriminator; exposes the three intermediate
// feature maps for the feature matching loss.
struct PatchDiscriminator {
  NetConfig cfg;
  std::vector<Conv2dLayer> convs;
  Conv2dLayer head;

  PatchDiscriminator() = default;
  PatchDiscriminator(const NetConfig& cfg, Rng& rng);

  struct Output {
    Tensor logits;                // [B,1,H/8,W/8]
    std::vector<Tensor> features;  // forward order, length 3
  };
  Output forward(const Tensor& image, const Tensor& mask);

  void visit_params(const std::string& prefix, const TensorVisitor& fn);
};

// T: small classification CNN (3 stride-2 blocks, global average pool, head).
struct TaskNet {
  NetConfig cfg;
  std::vector<Conv2dLayer> convs;
  std::vector<BatchNorm2d> norms;
  LinearLayer head;

  TaskNet() = default;
  TaskNet(const NetConfig& cfg, Rng& rng);

  Tensor forward(const Tensor& image, Mode mode);  // raw logits [B,C]

  void visit_params(const std::string& prefix, const TensorVisitor& fn);
  void visit_buffers(const std::string& prefix, const TensorVisitor& fn);
};

// Per-sample conditioning masks resized for every generator stage and
// stacked per resolution: result[r] has shape [B,K,res_r,res_r].
std::vector<Tensor> masks_for_generator(const Generator& gen,
                                        std::span<const MaskTensor> masks, DType dt);

// image' = G(reparameterize(E(image)), masks(image)): same shape, same
// labels, fresh texture per noise draw.
Tensor repaint_batch(Encoder& enc, Generator& gen, const Tensor& images,
                     std::span<const Tensor> gen_masks, const Tensor& noise, Mode mode);

// Single-image convenience used by the CLI and metrics: derives masks with
// the provider config, draws noise from rng.
Tensor repaint_single(Encoder& enc, Generator& gen, const Tensor& image,
                      const MaskProviderConfig& masks, Rng& rng, Mode mode = Mode::Eval);

}  // namespace repaint
