#include "elemedit/codec.hpp"

#include <cstring>

namespace elemedit {

ContentEncoderImpl::ContentEncoderImpl(const CodecConfig& config) {
  const int64_t c = config.encoder_channels;
  conv_in_ = register_module("conv_in", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, c, 3).padding(1)));
  res1_ = register_module("res1", nn::ResBlock(c, c));
  down1_ = register_module("down1", torch::nn::Conv2d(torch::nn::Conv2dOptions(c, c, 3).stride(2).padding(1)));
  res2_ = register_module("res2", nn::ResBlock(c, 2 * c));
  down2_ = register_module("down2", torch::nn::Conv2d(torch::nn::Conv2dOptions(2 * c, 2 * c, 3).stride(2).padding(1)));
  mid1_ = register_module("mid1", nn::ResBlock(2 * c, 2 * c));
  mid_attn_ = register_module("mid_attn", nn::SpatialSelfAttention(2 * c));
  mid2_ = register_module("mid2", nn::ResBlock(2 * c, 2 * c));
  norm_out_ = register_module("norm_out", torch::nn::GroupNorm(nn::groups_for(2 * c), 2 * c));
  // The remaining (P / 4) x (P / 4) map collapses to one D_e vector.
  conv_out_ = register_module("conv_out", torch::nn::Conv2d(torch::nn::Conv2dOptions(2 * c, config.embed_dim, config.patch / 4)));
}

torch::Tensor ContentEncoderImpl::forward(const torch::Tensor& patches) {
  auto h = conv_in_(patches * 2.0 - 1.0);
  h = down1_(res1_(h));
  h = down2_(res2_(h));
  h = mid2_(mid_attn_(mid1_(h)));
  h = conv_out_(torch::silu(norm_out_(h)));
  return h.flatten(1);
}

DecoderBlockImpl::DecoderBlockImpl(const CodecConfig& c) {
  const int64_t w = c.decoder_width;
  norm_cross_ = register_module("norm_cross", torch::nn::LayerNorm(torch::nn::LayerNormOptions({w})));
  cross_ = register_module("cross", nn::Attention(w, c.token_dim(), c.embed_dim, w, 1));
  for (int i = 0; i < 2; ++i) {
    self_norms_->push_back(torch::nn::LayerNorm(torch::nn::LayerNormOptions({w})));
    self_attn_->push_back(nn::Attention(w, w, w, w, c.decoder_heads));
    ff_norms_->push_back(torch::nn::LayerNorm(torch::nn::LayerNormOptions({w})));
    ff_->push_back(nn::FeedForward(w));
  }
  register_module("self_norms", self_norms_);
  register_module("self_attn", self_attn_);
  register_module("ff_norms", ff_norms_);
  register_module("ff", ff_);
}

torch::Tensor DecoderBlockImpl::forward(const torch::Tensor& x_in, const torch::Tensor& keys, const torch::Tensor& values) {
  auto x = x_in + cross_(norm_cross_(x_in), keys, values);
  for (std::size_t i = 0; i < 2; ++i) {
    auto n = self_norms_[i]->as<torch::nn::LayerNorm>()->forward(x);
    x = x + self_attn_[i]->as<nn::Attention>()->forward(n, n, n);
    x = x + ff_[i]->as<nn::FeedForward>()->forward(ff_norms_[i]->as<torch::nn::LayerNorm>()->forward(x));
  }
  return x;
}

LightDecoderImpl::LightDecoderImpl(const CodecConfig& c) : config_{c} {
  query_features_ = register_buffer("query_features", nn::grid_fourier(c.query_grid, c.query_grid, c.query_bands));
  query_in_ = register_module("query_in", torch::nn::Linear(4 * c.query_bands, c.decoder_width));
  for (int b = 0; b < c.decoder_blocks; ++b) blocks_->push_back(DecoderBlock(c));
  register_module("blocks", blocks_);
  norm_out_ = register_module("norm_out", torch::nn::LayerNorm(torch::nn::LayerNormOptions({c.decoder_width})));
  const int op = c.out_patch();
  out_ = register_module("to_pixels", torch::nn::Linear(c.decoder_width, op * op * 3));
}

torch::Tensor LightDecoderImpl::forward(const torch::Tensor& tokens, const torch::Tensor& embeddings) {
  const auto b = tokens.size(0);
  auto x = query_in_(query_features_).unsqueeze(0).expand({b, -1, -1});
  for (auto& block : *blocks_) x = block->as<DecoderBlock>()->forward(x, tokens, embeddings);
  auto y = out_(norm_out_(x));  // [B, R*R, op*op*3]
  const int64_t r = config_.query_grid, op = config_.out_patch();
  // [B, R, R, op, op, 3] -> [B, 3, R, op, R, op]
  y = y.view({b, r, r, op, op, 3}).permute({0, 5, 1, 3, 2, 4});
  return y.reshape({b, 3, r * op, r * op});
}

torch::Tensor element_tokens(const ElementTensors& e) {
  auto mask = e.valid.unsqueeze(-1).to(e.embeddings.dtype());
  return torch::cat({e.embeddings, e.spatial.to(e.embeddings.dtype())}, -1) * mask;
}

CodecImpl::CodecImpl(const CodecConfig& config) : config_{config} {
  config_.validate();
  encoder = register_module("encoder", ContentEncoder(config_));
  decoder = register_module("decoder", LightDecoder(config_));
}

torch::Tensor CodecImpl::encode(const torch::Tensor& patches) {
  if (patches.dim() != 4 || patches.size(1) != 3 || patches.size(2) != config_.patch || patches.size(3) != config_.patch) {
    throw InputError("encoder expects [M, 3, " + std::to_string(config_.patch) + ", " + std::to_string(config_.patch) +
                     "] patches");
  }
  return encoder(patches);
}

ElementTensors CodecImpl::encode_batch(const PatchTensors& batch) {
  const auto b = batch.patches.size(0), n = batch.patches.size(1);
  auto flat = batch.patches.reshape({b * n, 3, config_.patch, config_.patch});
  auto emb = encode(flat).view({b, n, config_.embed_dim});
  auto mask = batch.valid.unsqueeze(-1).to(emb.dtype());
  return {emb * mask, batch.spatial * mask, batch.valid};
}

torch::Tensor CodecImpl::decode(const ElementTensors& e) { return decoder(element_tokens(e), e.embeddings); }

Image canonical_patch(const partition::ImageElement& element, int resolution) {
  if (!element.valid || element.patch.empty()) return Image(resolution, resolution);
  return resize_bilinear(element.patch, resolution, resolution);
}

PatchTensors patch_tensors(const std::vector<partition::ImageElement>& elements, const CodecConfig& config) {
  const auto n = static_cast<int64_t>(elements.size());
  const int p = config.patch;
  auto patches = torch::zeros({n, 3, p, p});
  auto spatial = torch::zeros({n, config.spatial_dim()});
  auto valid = torch::zeros({n});
  for (int64_t i = 0; i < n; ++i) {
    const auto& e = elements[static_cast<std::size_t>(i)];
    if (!e.valid) continue;
    Image canon = canonical_patch(e, p);
    patches[i] = nn::image_to_tensor(canon).add(1.0).mul(0.5);
    auto s = embed_spatial({e.centroid.x, e.centroid.y, e.w, e.h}, true, config.spatial_bands);
    spatial[i] = torch::from_blob(s.data(), {static_cast<int64_t>(s.size())}, torch::kFloat32).clone();
    valid[i] = 1.0;
  }
  return {patches, spatial, valid};
}

std::vector<float> encode_patch(Codec& codec, const Image& patch) {
  const int p = codec->config().patch;
  if (patch.height != p || patch.width != p) {
    throw InputError("patch must be resized to " + std::to_string(p) + "x" + std::to_string(p) + " first");
  }
  torch::NoGradGuard guard;
  auto t = nn::image_to_tensor(patch).add(1.0).mul(0.5).unsqueeze(0);
  auto e = codec->encode(t).contiguous();
  return {e.data_ptr<float>(), e.data_ptr<float>() + e.numel()};
}

ElementSet encode_elements(Codec& codec, const std::vector<partition::ImageElement>& elements) {
  const auto& cfg = codec->config();
  ElementSet set(elements.size(), cfg.embed_dim);
  auto pt = patch_tensors(elements, cfg);
  torch::NoGradGuard guard;
  auto emb = codec->encode(pt.patches).contiguous();
  for (std::size_t i = 0; i < elements.size(); ++i) {
    const auto& e = elements[i];
    if (!e.valid) continue;
    auto& out = set[i];
    out.valid = true;
    out.spatial = {e.centroid.x, e.centroid.y, e.w, e.h};
    const float* row = emb.data_ptr<float>() + i * static_cast<std::size_t>(cfg.embed_dim);
    out.embedding.assign(row, row + cfg.embed_dim);
  }
  return set;
}

ElementTensors element_tensors(const std::vector<const ElementSet*>& sets, int spatial_bands) {
  if (sets.empty()) throw InputError("no element sets");
  const auto b = static_cast<int64_t>(sets.size());
  const auto n = static_cast<int64_t>(sets.front()->size());
  const int64_t d = sets.front()->embedding_dim;
  const int64_t dp = 8 * spatial_bands;
  std::vector<float> emb(static_cast<std::size_t>(b * n * d), 0.0f), sp(static_cast<std::size_t>(b * n * dp), 0.0f),
      valid(static_cast<std::size_t>(b * n), 0.0f);
  for (int64_t i = 0; i < b; ++i) {
    const auto& s = *sets[static_cast<std::size_t>(i)];
    if (static_cast<int64_t>(s.size()) != n || s.embedding_dim != d) throw InputError("element sets differ in shape");
    for (int64_t k = 0; k < n; ++k) {
      const auto& e = s[static_cast<std::size_t>(k)];
      if (!e.valid) continue;
      const auto slot = static_cast<std::size_t>(i * n + k);
      std::copy(e.embedding.begin(), e.embedding.end(), emb.begin() + static_cast<std::ptrdiff_t>(slot * d));
      auto f = embed_spatial(e.spatial, true, spatial_bands);
      std::copy(f.begin(), f.end(), sp.begin() + static_cast<std::ptrdiff_t>(slot * dp));
      valid[slot] = 1.0f;
    }
  }
  return {torch::from_blob(emb.data(), {b, n, d}, torch::kFloat32).clone(),
          torch::from_blob(sp.data(), {b, n, dp}, torch::kFloat32).clone(),
          torch::from_blob(valid.data(), {b, n}, torch::kFloat32).clone()};
}

Image decode_light(Codec& codec, const ElementSet& set) {
  torch::NoGradGuard guard;
  auto t = element_tensors({&set}, codec->config().spatial_bands);
  return nn::tensor_to_image(codec->decode(t)[0]);
}

}  // namespace elemedit
