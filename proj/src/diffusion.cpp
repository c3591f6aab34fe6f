#include "elemedit/diffusion.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <numbers>
#include <sstream>

namespace elemedit {

NoiseSchedule NoiseSchedule::linear(int timesteps, double beta_start, double beta_end) {
  if (timesteps <= 0) throw InputError("timesteps must be positive");
  NoiseSchedule s;
  s.timesteps = timesteps;
  s.beta.assign(static_cast<std::size_t>(timesteps) + 1, 0.0);
  s.alpha.assign(static_cast<std::size_t>(timesteps) + 1, 1.0);
  s.alpha_bar.assign(static_cast<std::size_t>(timesteps) + 1, 1.0);
  for (int t = 1; t <= timesteps; ++t) {
    const double frac = timesteps == 1 ? 0.0 : static_cast<double>(t - 1) / (timesteps - 1);
    s.beta[t] = beta_start + (beta_end - beta_start) * frac;
    s.alpha[t] = 1.0 - s.beta[t];
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
  }
  return s;
}

double NoiseSchedule::alpha_bar_at(int t) const {
  if (t < 0 || t > timesteps) throw InputError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(timesteps) + "]");
  return alpha_bar[static_cast<std::size_t>(t)];
}

torch::Tensor forward_sample(const torch::Tensor& z0, int t, const torch::Tensor& eps, const NoiseSchedule& s) {
  if (t < 1 || t > s.timesteps) throw InputError("timestep must be in [1, T]");
  if (!z0.sizes().equals(eps.sizes())) throw InputError("eps shape differs from z0");
  const double ab = s.alpha_bar[static_cast<std::size_t>(t)];
  return std::sqrt(ab) * z0 + std::sqrt(1.0 - ab) * eps;
}

torch::Tensor forward_sample(const torch::Tensor& z0, const torch::Tensor& t, const torch::Tensor& eps,
                             const NoiseSchedule& s) {
  if (!z0.sizes().equals(eps.sizes())) throw InputError("eps shape differs from z0");
  if (t.min().item<int64_t>() < 1 || t.max().item<int64_t>() > s.timesteps) throw InputError("timestep must be in [1, T]");
  auto table = torch::tensor(s.alpha_bar, torch::TensorOptions().dtype(torch::kFloat64)).to(z0.dtype());
  auto ab = table.index_select(0, t).view({-1, 1, 1, 1});
  return torch::sqrt(ab) * z0 + torch::sqrt(1.0 - ab) * eps;
}

torch::Tensor timestep_embedding(const torch::Tensor& t, int64_t dim) {
  const int64_t half = dim / 2;
  auto freqs = torch::exp(-std::log(10000.0) * torch::arange(half, torch::kFloat32) / half);
  auto args = t.to(torch::kFloat32).unsqueeze(1) * freqs.unsqueeze(0);
  return torch::cat({torch::cos(args), torch::sin(args)}, 1);
}

Vocabulary::Vocabulary(std::vector<std::string> words) : words_{std::move(words)} {
  if (words_.size() < 2) throw InputError("vocabulary needs <pad> and <unk>");
  for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], static_cast<int64_t>(i));
}

std::vector<int64_t> Vocabulary::encode(const std::string& caption, int max_len) const {
  std::vector<int64_t> out(static_cast<std::size_t>(max_len), 0);
  std::istringstream in(caption);
  std::string w;
  for (std::size_t i = 0; i < out.size() && in >> w; ++i) {
    auto it = index_.find(w);
    out[i] = it == index_.end() ? 1 : it->second;
  }
  return out;
}

TextEncoderImpl::TextEncoderImpl(int64_t vocab_size, int64_t max_len, int64_t dim) {
  table_ = register_module("table", torch::nn::Embedding(vocab_size, dim));
  positions_ = register_parameter("positions", torch::randn({max_len, dim}) * 0.02);
  null_ = register_parameter("null", torch::randn({max_len, dim}) * 0.02);
  norm_ = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
}

torch::Tensor TextEncoderImpl::forward(const torch::Tensor& tokens) {
  if (tokens.size(1) != positions_.size(0)) throw InputError("caption length differs from the encoder's max length");
  return norm_(table_(tokens) + positions_.unsqueeze(0));
}

torch::Tensor TextEncoderImpl::null_sequence(int64_t batch) const { return null_.unsqueeze(0).expand({batch, -1, -1}); }

FusedAttentionBlockImpl::FusedAttentionBlockImpl(int64_t dim, int64_t heads, int64_t text_dim, int64_t element_dim) {
  auto ln = [&](const char* name) {
    return register_module(name, torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  };
  norm_self = ln("norm_self");
  norm_text = ln("norm_text");
  norm_elem = ln("norm_elem");
  norm_ff = ln("norm_ff");
  self_attn = register_module("self_attn", nn::Attention(dim, dim, dim, dim, heads));
  cross_text = register_module("cross_text", nn::Attention(dim, text_dim, text_dim, dim, heads));
  cross_elem = register_module("cross_elem", nn::Attention(dim, element_dim, element_dim, dim, heads));
  ff = register_module("ff", nn::FeedForward(dim));
}

torch::Tensor FusedAttentionBlockImpl::forward(const torch::Tensor& x_in, const torch::Tensor& text,
                                               const torch::Tensor& elements) {
  auto n = norm_self(x_in);
  auto x = x_in + self_attn(n, n, n);
  torch::Tensor y;
  if (text.defined()) {
    auto nt = norm_text(x);
    y = cross_text(nt, text, text);
  }
  if (elements.defined()) {
    auto ne = norm_elem(x);
    auto ye = cross_elem(ne, elements, elements);
    y = y.defined() ? y + ye : ye;
  }
  if (y.defined()) x = x + y;
  return x + ff(norm_ff(x));
}

SpatialTransformerImpl::SpatialTransformerImpl(int64_t channels, int64_t heads, int64_t context_dim, int resolution) {
  constexpr int kBands = 5;
  norm_ = register_module("norm", torch::nn::GroupNorm(nn::groups_for(channels), channels));
  proj_in_ = register_module("proj_in", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 1)));
  pos_ = register_module("pos", torch::nn::Linear(4 * kBands, channels));
  pos_features_ = register_buffer("pos_features", nn::grid_fourier(resolution, resolution, kBands));
  block_ = register_module("block", FusedAttentionBlock(channels, heads, context_dim, context_dim));
  proj_out_ = register_module("proj_out", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 1)));
}

torch::Tensor SpatialTransformerImpl::forward(const torch::Tensor& x, const torch::Tensor& text,
                                              const torch::Tensor& elements) {
  const auto b = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
  auto tokens = proj_in_(norm_(x)).flatten(2).transpose(1, 2) + pos_(pos_features_).unsqueeze(0);
  tokens = block_(tokens, text, elements);
  return x + proj_out_(tokens.transpose(1, 2).reshape({b, c, h, w}));
}

UNetImpl::UNetImpl(const DiffusionConfig& config) : config_{config} {
  config_.validate();
  const int64_t c = config.base_channels;
  time_dim_ = 4 * c;
  time_mlp_ = register_module("time_mlp", torch::nn::Sequential(torch::nn::Linear(c, time_dim_), torch::nn::SiLU(),
                                                                torch::nn::Linear(time_dim_, time_dim_)));
  conv_in_ = register_module("conv_in",
                             torch::nn::Conv2d(torch::nn::Conv2dOptions(3 + config.element_map_channels, c, 3).padding(1)));

  auto has_attn = [&](int level) {
    return std::find(config.attention_levels.begin(), config.attention_levels.end(), level) !=
           config.attention_levels.end();
  };
  const int levels = static_cast<int>(config.channel_mult.size());
  std::vector<int64_t> skip_channels;
  int64_t ch = c;
  int res = config.resolution;
  for (int l = 0; l < levels; ++l) {
    const int64_t out = c * config.channel_mult[static_cast<std::size_t>(l)];
    Level lv;
    lv.res = register_module("down" + std::to_string(l) + "_res", nn::ResBlock(ch, out, time_dim_));
    if (has_attn(l))
      lv.attn = register_module("down" + std::to_string(l) + "_attn",
                                SpatialTransformer(out, config.heads, config.context_dim, res));
    down_.push_back(lv);
    skip_channels.push_back(out);
    ch = out;
    if (l + 1 < levels) {
      downsample_.push_back(register_module("downsample" + std::to_string(l),
                                            torch::nn::Conv2d(torch::nn::Conv2dOptions(ch, ch, 3).stride(2).padding(1))));
      res /= 2;
    }
  }
  mid1_ = register_module("mid1", nn::ResBlock(ch, ch, time_dim_));
  mid_attn_ = register_module("mid_attn", SpatialTransformer(ch, config.heads, config.context_dim, res));
  mid2_ = register_module("mid2", nn::ResBlock(ch, ch, time_dim_));
  for (int l = levels - 1; l >= 0; --l) {
    const int64_t out = c * config.channel_mult[static_cast<std::size_t>(l)];
    Level lv;
    lv.res = register_module("up" + std::to_string(l) + "_res",
                             nn::ResBlock(ch + skip_channels[static_cast<std::size_t>(l)], out, time_dim_));
    if (has_attn(l))
      lv.attn = register_module("up" + std::to_string(l) + "_attn",
                                SpatialTransformer(out, config.heads, config.context_dim, res));
    up_.push_back(lv);
    ch = out;
    if (l > 0) {
      upsample_.push_back(register_module("upsample" + std::to_string(l),
                                          torch::nn::Conv2d(torch::nn::Conv2dOptions(ch, ch, 3).padding(1))));
      res *= 2;
    }
  }
  norm_out_ = register_module("norm_out", torch::nn::GroupNorm(nn::groups_for(ch), ch));
  conv_out_ = register_module("conv_out", torch::nn::Conv2d(torch::nn::Conv2dOptions(ch, 3, 3).padding(1)));
  // Start as a zero predictor.
  torch::NoGradGuard guard;
  conv_out_->weight.zero_();
  conv_out_->bias.zero_();
}

torch::Tensor UNetImpl::forward(const torch::Tensor& z, const torch::Tensor& t, const torch::Tensor& text,
                                const torch::Tensor& elements, const torch::Tensor& element_map) {
  if (z.dim() != 4 || z.size(1) != 3 || z.size(2) != config_.resolution || z.size(3) != config_.resolution) {
    throw InputError("UNet input must be [B, 3, " + std::to_string(config_.resolution) + ", " +
                     std::to_string(config_.resolution) + "]");
  }
  auto emb = time_mlp_->forward(timestep_embedding(t, config_.base_channels).to(z.dtype()));
  torch::Tensor input = z;
  if (config_.element_map_channels > 0) {
    auto m = element_map.defined()
                 ? element_map
                 : torch::zeros({z.size(0), config_.element_map_channels, z.size(2), z.size(3)}, z.options());
    if (!m.sizes().equals({z.size(0), config_.element_map_channels, z.size(2), z.size(3)}))
      throw InputError("element map shape differs from the UNet input");
    input = torch::cat({z, m}, 1);
  } else if (element_map.defined()) {
    throw InputError("this UNet takes no element map");
  }
  auto h = conv_in_(input);
  std::vector<torch::Tensor> skips;
  for (std::size_t l = 0; l < down_.size(); ++l) {
    h = down_[l].res(h, emb);
    if (down_[l].attn) h = down_[l].attn(h, text, elements);
    skips.push_back(h);
    if (l < downsample_.size()) h = downsample_[l](h);
  }
  h = mid2_(mid_attn_(mid1_(h, emb), text, elements), emb);
  for (std::size_t k = 0; k < up_.size(); ++k) {
    h = up_[k].res(torch::cat({h, skips[skips.size() - 1 - k]}, 1), emb);
    if (up_[k].attn) h = up_[k].attn(h, text, elements);
    if (k < upsample_.size()) {
      h = torch::nn::functional::interpolate(
          h, torch::nn::functional::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest));
      h = upsample_[k](h);
    }
  }
  return conv_out_(torch::silu(norm_out_(h)));
}

DiffusionModelImpl::DiffusionModelImpl(const DiffusionConfig& config, const CodecConfig& codec, std::size_t vocab_size)
    : config_{config}, embed_dim_{codec.embed_dim}, spatial_bands_{codec.spatial_bands} {
  unet = register_module("unet", UNet(config));
  text = register_module("text", TextEncoder(static_cast<int64_t>(vocab_size), config.text_max_len, config.context_dim));
  element_proj = register_module(
      "element_proj", torch::nn::Linear(torch::nn::LinearOptions(codec.token_dim(), config.context_dim).bias(false)));
  if (config.element_map_channels > 0)
    element_map_proj = register_module("element_map_proj",
                                       torch::nn::Linear(codec.token_dim(), config.element_map_channels));
  present_flag = register_parameter("present_flag", torch::randn({config.context_dim}) * 0.02);
  null_flag = register_parameter("null_flag", torch::randn({config.context_dim}) * 0.02);
}

torch::Tensor DiffusionModelImpl::text_context(const torch::Tensor& tokens, const torch::Tensor& null_mask) {
  auto ctx = text(tokens);
  auto keep = null_mask.logical_not().view({-1, 1, 1});
  return torch::where(keep, ctx, text->null_sequence(tokens.size(0)).to(ctx.dtype()));
}

torch::Tensor DiffusionModelImpl::element_context(const torch::Tensor& tokens, const torch::Tensor& null_mask) {
  auto keep = null_mask.logical_not().to(tokens.dtype()).view({-1, 1, 1});
  auto ctx = element_proj(tokens * keep);
  auto flag = torch::where(null_mask.view({-1, 1}), null_flag.unsqueeze(0), present_flag.unsqueeze(0));
  return torch::cat({ctx, flag.unsqueeze(1).to(ctx.dtype())}, 1);
}

torch::Tensor DiffusionModelImpl::element_map(const torch::Tensor& tokens, const torch::Tensor& null_mask) {
  if (!element_map_proj) return {};
  const int res = config_.resolution;
  auto keep = null_mask.logical_not().view({-1, 1, 1});
  auto valid = (tokens != 0).any(2).logical_and(keep.view({-1, 1}));  // [B, N]
  torch::Tensor cover;
  {
    torch::NoGradGuard ng;
    auto g = token_geometry(tokens.detach(), embed_dim_, spatial_bands_);
    auto centers = (torch::arange(res, torch::kFloat32) + 0.5) / res;
    // A box smaller than a pixel still covers the pixel nearest its centroid.
    auto half_w = torch::clamp_min(g.select(2, 2) * 0.5, 0.5 / res).unsqueeze(2);
    auto half_h = torch::clamp_min(g.select(2, 3) * 0.5, 0.5 / res).unsqueeze(2);
    auto in_x = (centers.view({1, 1, res}) - g.select(2, 0).unsqueeze(2)).abs() <= half_w;  // [B, N, W]
    auto in_y = (centers.view({1, 1, res}) - g.select(2, 1).unsqueeze(2)).abs() <= half_h;  // [B, N, H]
    cover = (in_y.unsqueeze(3) & in_x.unsqueeze(2) & valid.view({valid.size(0), valid.size(1), 1, 1}))
                .to(tokens.dtype());  // [B, N, H, W]
  }
  auto values = element_map_proj(tokens);  // [B, N, C]
  auto sum = torch::einsum("bnhw,bnc->bchw", {cover, values});
  auto count = cover.sum(1, true).clamp_min(1.0);
  return sum / count;
}

torch::Tensor DiffusionModelImpl::forward(const torch::Tensor& z, const torch::Tensor& t, const torch::Tensor& text_ctx,
                                          const torch::Tensor& element_ctx, const torch::Tensor& element_map) {
  return unet(z, t, text_ctx, element_ctx, element_map);
}

torch::Tensor token_geometry(const torch::Tensor& tokens, int embed_dim, int spatial_bands) {
  if (tokens.dim() != 3 || tokens.size(2) != embed_dim + 8 * spatial_bands)
    throw InputError("element tokens have the wrong width");
  std::vector<torch::Tensor> cols;
  for (int j = 0; j < 4; ++j) {
    const int64_t o = embed_dim + 2 * j * spatial_bands;
    cols.push_back(torch::atan2(tokens.select(2, o), tokens.select(2, o + 1)) / std::numbers::pi);
  }
  return torch::stack(cols, 2);
}

torch::Tensor cfg_combine(const torch::Tensor& eps_cond, const torch::Tensor& eps_uncond, double w) {
  if (w < 0) throw InputError("guidance weight must be non-negative");
  if (w == 0.0) return eps_uncond;
  if (w == 1.0) return eps_cond;
  return eps_uncond + w * (eps_cond - eps_uncond);
}

torch::Tensor cfg_epsilon(DiffusionModel& model, const torch::Tensor& z, int t, const GuidanceContext& ctx, double w) {
  if (w < 0) throw InputError("guidance weight must be non-negative");
  const auto b = z.size(0);
  auto tt = torch::full({b}, t, torch::kInt64);
  if (w == 0.0) return model(z, tt, ctx.text_null, ctx.elements_null, ctx.map_null);
  if (w == 1.0) return model(z, tt, ctx.text_cond, ctx.elements_cond, ctx.map_cond);
  torch::Tensor maps;
  if (ctx.map_cond.defined()) maps = torch::cat({ctx.map_cond, ctx.map_null});
  auto both = model(torch::cat({z, z}), torch::cat({tt, tt}), torch::cat({ctx.text_cond, ctx.text_null}),
                    torch::cat({ctx.elements_cond, ctx.elements_null}), maps);
  return cfg_combine(both.slice(0, 0, b), both.slice(0, b, 2 * b), w);
}

std::vector<int> ddim_timesteps(int timesteps, int steps) {
  if (steps <= 0 || steps > timesteps) throw InputError("DDIM steps must be in [1, T]");
  std::vector<int> out;
  for (int k = 1; k <= steps; ++k)
    out.push_back(static_cast<int>((static_cast<int64_t>(k) * timesteps) / steps));
  return out;
}

torch::Tensor ddim_sample(const torch::Tensor& z_T, const EpsilonFn& eps_fn, int steps, const NoiseSchedule& schedule,
                          bool clip_x0) {
  const auto taus = ddim_timesteps(schedule.timesteps, steps);
  auto z = z_T;
  for (int k = static_cast<int>(taus.size()) - 1; k >= 0; --k) {
    const int t = taus[static_cast<std::size_t>(k)];
    const int prev = k == 0 ? 0 : taus[static_cast<std::size_t>(k - 1)];
    const double ab = schedule.alpha_bar_at(t);
    const double ab_prev = schedule.alpha_bar_at(prev);
    auto eps = eps_fn(z, t);
    auto x0 = (z - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab);
    if (clip_x0) {
      x0 = x0.clamp(-1.0, 1.0);
      eps = (z - std::sqrt(ab) * x0) / std::sqrt(1.0 - ab);
    }
    z = std::sqrt(ab_prev) * x0 + std::sqrt(1.0 - ab_prev) * eps;
  }
  return z;
}

GuidanceContext make_guidance_context(DiffusionModel& model, const Vocabulary& vocab,
                                      const std::vector<const ElementSet*>& sets,
                                      const std::vector<std::string>& captions, int spatial_bands) {
  if (sets.size() != captions.size()) throw InputError("one caption per element set");
  const auto b = static_cast<int64_t>(sets.size());
  const int len = model->config().text_max_len;
  std::vector<int64_t> ids;
  for (const auto& c : captions) {
    auto e = vocab.encode(c, len);
    ids.insert(ids.end(), e.begin(), e.end());
  }
  auto tokens = torch::from_blob(ids.data(), {b, len}, torch::kInt64).clone();
  auto elements = element_tokens(element_tensors(sets, spatial_bands));
  auto no = torch::zeros({b}, torch::kBool);
  auto yes = torch::ones({b}, torch::kBool);
  return {model->text_context(tokens, no),    model->element_context(elements, no),
          model->text_context(tokens, yes),   model->element_context(elements, yes),
          model->element_map(elements, no),   model->element_map(elements, yes)};
}

torch::Tensor seeded_noise(std::uint64_t seed, int resolution) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return torch::randn({1, 3, resolution, resolution}, gen, torch::kFloat32);
}

std::vector<Image> decode_elements(DiffusionModel& model, const Vocabulary& vocab, const NoiseSchedule& schedule,
                                   const std::vector<const ElementSet*>& sets, const std::vector<std::string>& captions,
                                   const std::vector<std::uint64_t>& seeds, int steps, double guidance,
                                   int spatial_bands) {
  if (seeds.size() != sets.size()) throw InputError("one seed per element set");
  torch::NoGradGuard guard;
  const int res = model->config().resolution;
  std::vector<torch::Tensor> noise;
  for (auto s : seeds) noise.push_back(seeded_noise(s, res));
  auto ctx = make_guidance_context(model, vocab, sets, captions, spatial_bands);
  auto z0 = ddim_sample(
      torch::cat(noise), [&](const torch::Tensor& z, int t) { return cfg_epsilon(model, z, t, ctx, guidance); }, steps,
      schedule, true);
  std::vector<Image> out;
  for (int64_t i = 0; i < z0.size(0); ++i) out.push_back(nn::tensor_to_image(z0[i]));
  return out;
}

}  // namespace elemedit
