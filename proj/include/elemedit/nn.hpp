#pragma once

// Shared network layers and tensor conversions.

#include <torch/torch.h>

#include "elemedit/image.hpp"

namespace elemedit::nn {

/// [3, H, W] tensor in [-1, 1].
torch::Tensor image_to_tensor(const Image& image);
/// Inverse of image_to_tensor, clamped to [0, 1].
Image tensor_to_image(const torch::Tensor& chw);

/// Fourier features with the same layout as embed_spatial: [..., k] -> [..., 2 * bands * k].
torch::Tensor fourier(const torch::Tensor& values, int bands);

/// Fourier features of the cell centers of a rows x cols grid, row-major: [rows * cols, 4 * bands].
torch::Tensor grid_fourier(int rows, int cols, int bands);

/// Multi-head attention with separately sized query, key and value sources.
/// Key and value projections carry no bias, so an all-zero context token
/// yields an exactly zero key and value.
class AttentionImpl : public torch::nn::Module {
 public:
  AttentionImpl(int64_t query_dim, int64_t key_dim, int64_t value_dim, int64_t inner_dim, int64_t heads);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& key_src, const torch::Tensor& value_src);

  torch::nn::Linear to_q{nullptr}, to_k{nullptr}, to_v{nullptr}, to_out{nullptr};

 private:
  int64_t heads_;
};
TORCH_MODULE(Attention);

class FeedForwardImpl : public torch::nn::Module {
 public:
  FeedForwardImpl(int64_t dim, int64_t mult = 4);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Linear in_{nullptr}, out_{nullptr};
};
TORCH_MODULE(FeedForward);

/// GroupNorm-SiLU-conv residual block; an optional embedding (timestep) is added after the first conv.
class ResBlockImpl : public torch::nn::Module {
 public:
  ResBlockImpl(int64_t in_ch, int64_t out_ch, int64_t emb_dim = 0);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& emb = {});

 private:
  torch::nn::GroupNorm norm1_{nullptr}, norm2_{nullptr};
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, skip_{nullptr};
  torch::nn::Linear emb_proj_{nullptr};
};
TORCH_MODULE(ResBlock);

/// Single-head spatial self-attention over the H * W positions of a feature map.
class SpatialSelfAttentionImpl : public torch::nn::Module {
 public:
  explicit SpatialSelfAttentionImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::GroupNorm norm_{nullptr};
  Attention attn_{nullptr};
};
TORCH_MODULE(SpatialSelfAttention);

int64_t groups_for(int64_t channels);

/// SHA-256 over all parameter bytes in registration order.
std::string parameter_digest(const torch::nn::Module& module);

}  // namespace elemedit::nn
