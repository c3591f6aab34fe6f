#pragma once

// Element-conditioned diffusion decoder: noise schedule, fused attention
// UNet, dual classifier-free guidance and the deterministic DDIM sampler.

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include <torch/torch.h>

#include "elemedit/codec.hpp"
#include "elemedit/config.hpp"

namespace elemedit {

/// Linear-beta schedule; index t in [1, T], alpha_bar(0) = 1.
struct NoiseSchedule {
  int timesteps = 0;
  std::vector<double> beta;       // [0] unused
  std::vector<double> alpha;      // [0] unused
  std::vector<double> alpha_bar;  // [0] = 1

  static NoiseSchedule linear(int timesteps, double beta_start, double beta_end);
  [[nodiscard]] double alpha_bar_at(int t) const;
};

/// sqrt(abar_t) z0 + sqrt(1 - abar_t) eps, t in [1, T].
torch::Tensor forward_sample(const torch::Tensor& z0, int t, const torch::Tensor& eps, const NoiseSchedule& s);
/// Per-sample timesteps t: [B] int64.
torch::Tensor forward_sample(const torch::Tensor& z0, const torch::Tensor& t, const torch::Tensor& eps,
                             const NoiseSchedule& s);

/// Sinusoidal embedding of (float) timesteps: [B] -> [B, dim].
torch::Tensor timestep_embedding(const torch::Tensor& t, int64_t dim);

/// Closed caption vocabulary; unknown words map to index 1, padding is 0.
class Vocabulary {
 public:
  explicit Vocabulary(std::vector<std::string> words);
  [[nodiscard]] std::vector<int64_t> encode(const std::string& caption, int max_len) const;
  [[nodiscard]] std::size_t size() const { return words_.size(); }
  [[nodiscard]] const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int64_t> index_;
};

/// Learned token table with learned positions; the null condition is a
/// dedicated learned sequence.
class TextEncoderImpl : public torch::nn::Module {
 public:
  TextEncoderImpl(int64_t vocab_size, int64_t max_len, int64_t dim);
  torch::Tensor forward(const torch::Tensor& tokens);  // [B, L] -> [B, L, dim]
  torch::Tensor null_sequence(int64_t batch) const;

 private:
  torch::nn::Embedding table_{nullptr};
  torch::Tensor positions_, null_;
  torch::nn::LayerNorm norm_{nullptr};
};
TORCH_MODULE(TextEncoder);

/// Self-attention, then the sum of text and element cross-attention, then a feed-forward.
/// Undefined context tensors mean "absent".
class FusedAttentionBlockImpl : public torch::nn::Module {
 public:
  FusedAttentionBlockImpl(int64_t dim, int64_t heads, int64_t text_dim, int64_t element_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& text, const torch::Tensor& elements);

  torch::nn::LayerNorm norm_self{nullptr}, norm_text{nullptr}, norm_elem{nullptr}, norm_ff{nullptr};
  nn::Attention self_attn{nullptr}, cross_text{nullptr}, cross_elem{nullptr};
  nn::FeedForward ff{nullptr};
};
TORCH_MODULE(FusedAttentionBlock);

/// Feature map <-> token wrapper around a fused block; tokens carry a Fourier
/// encoding of their (u, v) cell center.
class SpatialTransformerImpl : public torch::nn::Module {
 public:
  SpatialTransformerImpl(int64_t channels, int64_t heads, int64_t context_dim, int resolution);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& text, const torch::Tensor& elements);

 private:
  torch::nn::GroupNorm norm_{nullptr};
  torch::nn::Conv2d proj_in_{nullptr}, proj_out_{nullptr};
  torch::nn::Linear pos_{nullptr};
  torch::Tensor pos_features_;
  FusedAttentionBlock block_{nullptr};
};
TORCH_MODULE(SpatialTransformer);

class UNetImpl : public torch::nn::Module {
 public:
  explicit UNetImpl(const DiffusionConfig& config);
  /// z: [B, 3, H, W], t: [B] int64; contexts [B, L, context_dim] or undefined;
  /// element_map [B, element_map_channels, H, W], undefined means zeros.
  torch::Tensor forward(const torch::Tensor& z, const torch::Tensor& t, const torch::Tensor& text,
                        const torch::Tensor& elements, const torch::Tensor& element_map = {});

 private:
  struct Level {
    nn::ResBlock res{nullptr};
    SpatialTransformer attn{nullptr};
  };
  DiffusionConfig config_;
  int64_t time_dim_;
  torch::nn::Sequential time_mlp_{nullptr};
  torch::nn::Conv2d conv_in_{nullptr}, conv_out_{nullptr};
  torch::nn::GroupNorm norm_out_{nullptr};
  std::vector<Level> down_, up_;
  std::vector<torch::nn::Conv2d> downsample_, upsample_;
  nn::ResBlock mid1_{nullptr}, mid2_{nullptr};
  SpatialTransformer mid_attn_{nullptr};
};
TORCH_MODULE(UNet);

/// UNet plus the conditioning front-ends (text encoder, element projection, flag tokens).
class DiffusionModelImpl : public torch::nn::Module {
 public:
  DiffusionModelImpl(const DiffusionConfig& config, const CodecConfig& codec, std::size_t vocab_size);

  /// tokens [B, L] int64; rows with null_mask set take the learned null sequence.
  torch::Tensor text_context(const torch::Tensor& tokens, const torch::Tensor& null_mask);
  /// element tokens [B, N, D_e + D_p] -> [B, N + 1, context_dim]; the extra token is a
  /// learned flag distinguishing a present set from the null set (zero tokens).
  torch::Tensor element_context(const torch::Tensor& tokens, const torch::Tensor& null_mask);
  /// Each valid element's projected token averaged over the pixels its box covers:
  /// [B, N, D_e + D_p] -> [B, element_map_channels, H, W]. Undefined when the map is disabled.
  torch::Tensor element_map(const torch::Tensor& tokens, const torch::Tensor& null_mask);
  torch::Tensor forward(const torch::Tensor& z, const torch::Tensor& t, const torch::Tensor& text_ctx,
                        const torch::Tensor& element_ctx, const torch::Tensor& element_map = {});

  [[nodiscard]] const DiffusionConfig& config() const { return config_; }

  UNet unet{nullptr};
  TextEncoder text{nullptr};
  torch::nn::Linear element_proj{nullptr}, element_map_proj{nullptr};
  torch::Tensor present_flag, null_flag;

 private:
  DiffusionConfig config_;
  int embed_dim_, spatial_bands_;
};
TORCH_MODULE(DiffusionModel);

/// eps_u + w (eps_c - eps_u); exactly eps_u at w = 0 and eps_c at w = 1.
torch::Tensor cfg_combine(const torch::Tensor& eps_cond, const torch::Tensor& eps_uncond, double w);

/// Conditioning of one decode: conditional and null contexts.
struct GuidanceContext {
  torch::Tensor text_cond, elements_cond;
  torch::Tensor text_null, elements_null;
  torch::Tensor map_cond, map_null;  // undefined when the model has no element map
};

/// Guided noise prediction. At w = 0 or w = 1 only the needed branch is evaluated.
torch::Tensor cfg_epsilon(DiffusionModel& model, const torch::Tensor& z, int t, const GuidanceContext& ctx, double w);

/// DDIM sub-sequence tau_k = floor(k T / steps), k = 1..steps (tau_0 = 0 implied).
std::vector<int> ddim_timesteps(int timesteps, int steps);

using EpsilonFn = std::function<torch::Tensor(const torch::Tensor& z, int t)>;

/// Deterministic (eta = 0) DDIM from z_T down to z_0.
torch::Tensor ddim_sample(const torch::Tensor& z_T, const EpsilonFn& eps, int steps, const NoiseSchedule& schedule,
                          bool clip_x0 = false);

/// Builds the guidance context for a batch of element sets and captions.
GuidanceContext make_guidance_context(DiffusionModel& model, const Vocabulary& vocab,
                                      const std::vector<const ElementSet*>& sets,
                                      const std::vector<std::string>& captions, int spatial_bands);

/// Decodes element sets with DDIM + guidance; one seeded z_T per image.
std::vector<Image> decode_elements(DiffusionModel& model, const Vocabulary& vocab, const NoiseSchedule& schedule,
                                   const std::vector<const ElementSet*>& sets, const std::vector<std::string>& captions,
                                   const std::vector<std::uint64_t>& seeds, int steps, double guidance,
                                   int spatial_bands);

/// Recovers (x, y, w, h) from the lowest Fourier band of element tokens:
/// [B, N, D_e + D_p] -> [B, N, 4]. Exact for values in [0, 1].
torch::Tensor token_geometry(const torch::Tensor& tokens, int embed_dim, int spatial_bands);

/// Unit Gaussian [1, 3, H, W] from a seeded generator.
torch::Tensor seeded_noise(std::uint64_t seed, int resolution);

}  // namespace elemedit
