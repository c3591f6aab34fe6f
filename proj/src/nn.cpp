#include "elemedit/nn.hpp"

#include <cmath>
#include <cstring>
#include <numbers>

#include "elemedit/elements.hpp"

namespace elemedit::nn {

torch::Tensor image_to_tensor(const Image& image) {
  auto hwc = torch::from_blob(const_cast<float*>(image.data.data()), {image.height, image.width, 3}, torch::kFloat32);
  return hwc.permute({2, 0, 1}).mul(2.0).sub(1.0).contiguous();
}

Image tensor_to_image(const torch::Tensor& chw) {
  if (chw.dim() != 3 || chw.size(0) != 3) throw InputError("expected a [3, H, W] tensor");
  auto hwc = chw.detach().to(torch::kFloat32).add(1.0).mul(0.5).clamp(0.0, 1.0).permute({1, 2, 0}).contiguous();
  Image out(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)));
  std::memcpy(out.data.data(), hwc.data_ptr<float>(), out.data.size() * sizeof(float));
  return out;
}

torch::Tensor fourier(const torch::Tensor& values, int bands) {
  auto freqs = torch::pow(2.0, torch::arange(bands, values.options())) * std::numbers::pi;
  auto args = values.unsqueeze(-1) * freqs;                       // [..., k, bands]
  auto pairs = torch::stack({torch::sin(args), torch::cos(args)}, -1);  // [..., k, bands, 2]
  auto sizes = values.sizes().vec();
  sizes.back() *= 2 * bands;
  return pairs.reshape(sizes);
}

torch::Tensor grid_fourier(int rows, int cols, int bands) {
  std::vector<float> out(static_cast<std::size_t>(rows) * cols * 4 * bands);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      const double uv[2] = {(j + 0.5) / cols, (i + 0.5) / rows};
      fourier_features(uv, bands, std::span<float>(out).subspan((static_cast<std::size_t>(i) * cols + j) * 4 * bands, 4 * bands));
    }
  return torch::from_blob(out.data(), {rows * cols, 4 * bands}, torch::kFloat32).clone();
}

AttentionImpl::AttentionImpl(int64_t query_dim, int64_t key_dim, int64_t value_dim, int64_t inner_dim, int64_t heads)
    : heads_{heads} {
  if (inner_dim % heads != 0) throw InputError("attention width must be a multiple of the head count");
  to_q = register_module("to_q", torch::nn::Linear(torch::nn::LinearOptions(query_dim, inner_dim).bias(false)));
  to_k = register_module("to_k", torch::nn::Linear(torch::nn::LinearOptions(key_dim, inner_dim).bias(false)));
  to_v = register_module("to_v", torch::nn::Linear(torch::nn::LinearOptions(value_dim, inner_dim).bias(false)));
  to_out = register_module("to_out", torch::nn::Linear(inner_dim, query_dim));
}

torch::Tensor AttentionImpl::forward(const torch::Tensor& x, const torch::Tensor& key_src, const torch::Tensor& value_src) {
  if (key_src.size(-1) != to_k->options.in_features() || value_src.size(-1) != to_v->options.in_features() ||
      x.size(-1) != to_q->options.in_features()) {
    throw InputError("attention token dimension mismatch");
  }
  const auto b = x.size(0);
  const auto lq = x.size(1);
  const auto lk = key_src.size(1);
  const auto d = to_q->options.out_features() / heads_;
  auto q = to_q(x).view({b, lq, heads_, d}).transpose(1, 2);
  auto k = to_k(key_src).view({b, lk, heads_, d}).transpose(1, 2);
  auto v = to_v(value_src).view({b, lk, heads_, d}).transpose(1, 2);
  auto w = torch::softmax(torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(d)), -1);
  auto o = torch::matmul(w, v).transpose(1, 2).reshape({b, lq, heads_ * d});
  return to_out(o);
}

FeedForwardImpl::FeedForwardImpl(int64_t dim, int64_t mult) {
  in_ = register_module("fc_in", torch::nn::Linear(dim, dim * mult));
  out_ = register_module("fc_out", torch::nn::Linear(dim * mult, dim));
}

torch::Tensor FeedForwardImpl::forward(const torch::Tensor& x) { return out_(torch::gelu(in_(x))); }

int64_t groups_for(int64_t channels) {
  for (int64_t g : {8, 4, 2, 1})
    if (channels % g == 0) return g;
  return 1;
}

ResBlockImpl::ResBlockImpl(int64_t in_ch, int64_t out_ch, int64_t emb_dim) {
  norm1_ = register_module("norm1", torch::nn::GroupNorm(groups_for(in_ch), in_ch));
  conv1_ = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, out_ch, 3).padding(1)));
  norm2_ = register_module("norm2", torch::nn::GroupNorm(groups_for(out_ch), out_ch));
  conv2_ = register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(out_ch, out_ch, 3).padding(1)));
  if (emb_dim > 0) emb_proj_ = register_module("emb_proj", torch::nn::Linear(emb_dim, out_ch));
  if (in_ch != out_ch) skip_ = register_module("skip", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, out_ch, 1)));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& emb) {
  auto h = conv1_(torch::silu(norm1_(x)));
  if (emb_proj_ && emb.defined()) h = h + emb_proj_(torch::silu(emb)).unsqueeze(-1).unsqueeze(-1);
  h = conv2_(torch::silu(norm2_(h)));
  return (skip_ ? skip_(x) : x) + h;
}

SpatialSelfAttentionImpl::SpatialSelfAttentionImpl(int64_t channels) {
  norm_ = register_module("norm", torch::nn::GroupNorm(groups_for(channels), channels));
  attn_ = register_module("attn", Attention(channels, channels, channels, channels, 1));
}

torch::Tensor SpatialSelfAttentionImpl::forward(const torch::Tensor& x) {
  const auto b = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
  auto t = norm_(x).flatten(2).transpose(1, 2);  // [B, HW, C]
  auto y = attn_(t, t, t).transpose(1, 2).reshape({b, c, h, w});
  return x + y;
}

std::string parameter_digest(const torch::nn::Module& module) {
  std::vector<std::uint8_t> bytes;
  for (const auto& p : module.parameters()) {
    auto t = p.detach().to(torch::kFloat32).contiguous();
    const auto* data = reinterpret_cast<const std::uint8_t*>(t.data_ptr<float>());
    bytes.insert(bytes.end(), data, data + t.numel() * sizeof(float));
  }
  return sha256_hex(bytes);
}

}  // namespace elemedit::nn
