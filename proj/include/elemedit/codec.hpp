#pragma once

// Content encoder and lightweight transformer decoder (stage 1 autoencoder).

#include <vector>

#include <torch/torch.h>

#include "elemedit/config.hpp"
#include "elemedit/elements.hpp"
#include "elemedit/nn.hpp"
#include "elemedit/partition.hpp"

namespace elemedit {

/// Convolutional encoder: canonical P x P masked patch -> D_e embedding.
class ContentEncoderImpl : public torch::nn::Module {
 public:
  explicit ContentEncoderImpl(const CodecConfig& config);
  /// patches: [M, 3, P, P] with values in [0, 1]; returns [M, D_e].
  torch::Tensor forward(const torch::Tensor& patches);

 private:
  torch::nn::Conv2d conv_in_{nullptr}, down1_{nullptr}, down2_{nullptr}, conv_out_{nullptr};
  nn::ResBlock res1_{nullptr}, res2_{nullptr}, mid1_{nullptr}, mid2_{nullptr};
  nn::SpatialSelfAttention mid_attn_{nullptr};
  torch::nn::GroupNorm norm_out_{nullptr};
};
TORCH_MODULE(ContentEncoder);

/// One decoder block: a single-head cross-attention over the element tokens
/// followed by two self-attention layers, each with a feed-forward.
class DecoderBlockImpl : public torch::nn::Module {
 public:
  DecoderBlockImpl(const CodecConfig& config);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& keys, const torch::Tensor& values);

 private:
  torch::nn::LayerNorm norm_cross_{nullptr};
  nn::Attention cross_{nullptr};
  torch::nn::ModuleList self_norms_, self_attn_, ff_norms_, ff_;
};
TORCH_MODULE(DecoderBlock);

class LightDecoderImpl : public torch::nn::Module {
 public:
  explicit LightDecoderImpl(const CodecConfig& config);
  /// tokens: [B, N, D_e + D_p] (keys), embeddings: [B, N, D_e] (values); returns [B, 3, H, W] in [-1, 1].
  torch::Tensor forward(const torch::Tensor& tokens, const torch::Tensor& embeddings);

 private:
  CodecConfig config_;
  torch::Tensor query_features_;
  torch::nn::Linear query_in_{nullptr}, out_{nullptr};
  torch::nn::LayerNorm norm_out_{nullptr};
  torch::nn::ModuleList blocks_;
};
TORCH_MODULE(LightDecoder);

/// Batched element tensors: embeddings [B, N, D_e], spatial features [B, N, D_p], valid [B, N] (0/1).
struct ElementTensors {
  torch::Tensor embeddings;
  torch::Tensor spatial;
  torch::Tensor valid;
};

/// Canonical encoder inputs for a batch: patches [B, N, 3, P, P] plus spatial features and validity.
struct PatchTensors {
  torch::Tensor patches;
  torch::Tensor spatial;
  torch::Tensor valid;
};

/// Concatenates content embedding and spatial features, zeroing invalid slots.
torch::Tensor element_tokens(const ElementTensors& e);

class CodecImpl : public torch::nn::Module {
 public:
  explicit CodecImpl(const CodecConfig& config);

  /// [M, 3, P, P] -> [M, D_e].
  torch::Tensor encode(const torch::Tensor& patches);
  /// Encodes a patch batch into element tensors (invalid slots zeroed).
  ElementTensors encode_batch(const PatchTensors& batch);
  torch::Tensor decode(const ElementTensors& elements);

  [[nodiscard]] const CodecConfig& config() const { return config_; }

  ContentEncoder encoder{nullptr};
  LightDecoder decoder{nullptr};

 private:
  CodecConfig config_;
};
TORCH_MODULE(Codec);

/// Bilinear resize of an element crop to the canonical resolution; invalid elements give a zero patch.
Image canonical_patch(const partition::ImageElement& element, int resolution);

/// Stacks canonical patches and spatial features of one image's elements.
/// Returns patches [N, 3, P, P], spatial [N, D_p], valid [N].
PatchTensors patch_tensors(const std::vector<partition::ImageElement>& elements, const CodecConfig& config);

/// Throws InputError unless the patch has the canonical resolution.
std::vector<float> encode_patch(Codec& codec, const Image& patch);

ElementSet encode_elements(Codec& codec, const std::vector<partition::ImageElement>& elements);

ElementTensors element_tensors(const std::vector<const ElementSet*>& sets, int spatial_bands);

Image decode_light(Codec& codec, const ElementSet& set);

}  // namespace elemedit
