#include "faceedit/discriminator.hpp"

#include <torch/torch.h>

#include "faceedit/errors.hpp"

namespace faceedit {

namespace nn = torch::nn;

namespace {

nn::Sequential downsample_blocks(const DiscriminatorConfig& c, std::int64_t first, std::int64_t last) {
  nn::Sequential seq;
  for (std::int64_t b = first; b <= last; ++b) {
    const auto in = b == 1 ? 3 : c.width(b - 1);
    const auto out = c.width(b);
    seq->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, 4).stride(2).padding(1)));
    if (c.norm == NormKind::kInstance) seq->push_back(nn::InstanceNorm2d(nn::InstanceNorm2dOptions(out).affine(true)));
    if (c.norm == NormKind::kLayer) seq->push_back(nn::GroupNorm(nn::GroupNormOptions(1, out)));
    seq->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
  }
  return seq;
}

}  // namespace

NormKind parse_norm_kind(const std::string& name) {
  if (name == "instance") return NormKind::kInstance;
  if (name == "layer") return NormKind::kLayer;
  if (name == "none") return NormKind::kNone;
  throw ConfigError("unknown normalisation '" + name + "' (expected instance, layer or none)");
}

std::string to_string(NormKind kind) {
  switch (kind) {
    case NormKind::kInstance:
      return "instance";
    case NormKind::kLayer:
      return "layer";
    case NormKind::kNone:
      return "none";
  }
  return "?";
}

void DiscriminatorConfig::validate() const {
  if (attributes < 1) throw ConfigError("discriminator needs k >= 1");
  if (tap_blocks < 1 || tap_blocks >= blocks) throw ConfigError("tap_blocks must lie in [1, blocks)");
  if (resolution % (std::int64_t{1} << blocks) != 0)
    throw ConfigError("resolution " + std::to_string(resolution) + " is not divisible by 2^" + std::to_string(blocks));
  if (base_width < 1 || max_width < base_width) throw ConfigError("invalid discriminator widths");
}

std::int64_t DiscriminatorConfig::width(std::int64_t block) const {
  return std::min(base_width << (block - 1), max_width);
}

AttentionBranchImpl::AttentionBranchImpl(std::int64_t in_channels, std::int64_t attributes) {
  to_features_ = register_module("features", nn::Conv2d(nn::Conv2dOptions(in_channels, attributes, 1)));
  map_in_ = register_module("map_in", nn::Conv2d(nn::Conv2dOptions(attributes, attributes, 1)));
  map_norm_ = register_module("map_norm", nn::InstanceNorm2d(nn::InstanceNorm2dOptions(attributes).affine(true)));
  map_out_ = register_module("map_out", nn::Conv2d(nn::Conv2dOptions(attributes, attributes, 1)));
}

AttentionBundle AttentionBranchImpl::forward(const torch::Tensor& f) {
  AttentionBundle out;
  out.features = to_features_->forward(f);
  out.maps = torch::sigmoid(map_out_->forward(map_norm_->forward(map_in_->forward(out.features))));
  out.probs = torch::sigmoid(out.features.mean({2, 3}));
  return out;
}

ClassifierHeadImpl::ClassifierHeadImpl(const DiscriminatorConfig& config) {
  trunk_ = register_module("trunk", downsample_blocks(config, config.tap_blocks + 1, config.blocks));
  const auto c = config.width(config.blocks);
  const double bound = 1.0 / std::sqrt(static_cast<double>(c));
  weight_ = register_parameter("weight", torch::empty({config.attributes, c}).uniform_(-bound, bound));
  bias_ = register_parameter("bias", torch::empty({config.attributes}).uniform_(-bound, bound));
}

torch::Tensor ClassifierHeadImpl::forward(const torch::Tensor& attended) {
  if (attended.dim() != 5 || attended.size(1) != weight_.size(0))
    throw ShapeError("classifier expects B x k x C x h x w attended stacks");
  const auto b = attended.size(0), k = attended.size(1);
  auto h = trunk_->forward(attended.flatten(0, 1)).mean({2, 3}).view({b, k, -1});
  auto logits = (h * weight_.unsqueeze(0)).sum(-1) + bias_;
  return torch::sigmoid(logits);
}

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto c = config_.width(config_.tap_blocks);
  extractor_ = register_module("extractor", downsample_blocks(config_, 1, config_.tap_blocks));
  ab_ = register_module("ab", AttentionBranch(c, config_.attributes));
  cls1_ = register_module("cls1", ClassifierHead(config_));
  if (config_.complementary) {
    cab_ = register_module("cab", AttentionBranch(c, config_.attributes));
    cls2_ = register_module("cls2", ClassifierHead(config_));
  }
  adv_trunk_ = register_module("adv_trunk", downsample_blocks(config_, config_.tap_blocks + 1, config_.blocks));
  const auto side = config_.resolution >> config_.blocks;
  adv_out_ = register_module("adv_out", nn::Linear(config_.width(config_.blocks) * side * side, 1));
}

torch::Tensor DiscriminatorImpl::extract_features(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 3 || x.size(2) != config_.resolution || x.size(3) != config_.resolution)
    throw ShapeError("discriminator expects B x 3 x " + std::to_string(config_.resolution) + " x " +
                     std::to_string(config_.resolution) + " input");
  return extractor_->forward(x);
}

AttentionBundle DiscriminatorImpl::attention_branch(const torch::Tensor& f) { return ab_->forward(f); }

AttentionBundle DiscriminatorImpl::complementary_attention_branch(const torch::Tensor& f) {
  if (!config_.complementary) throw ConfigError("discriminator was built without the complementary branch");
  return cab_->forward(f);
}

torch::Tensor DiscriminatorImpl::classify(const torch::Tensor& attended, int head) {
  if (head == 1) return cls1_->forward(attended);
  if (head == 2) {
    if (!config_.complementary) throw ConfigError("classifier head 2 is disabled without the complementary branch");
    return cls2_->forward(attended);
  }
  throw ConfigError("classifier head must be 1 or 2");
}

torch::Tensor DiscriminatorImpl::adversarial_score(const torch::Tensor& f) {
  return adv_out_->forward(adv_trunk_->forward(f).flatten(1)).squeeze(1);
}

DiscriminatorOutputs DiscriminatorImpl::forward(const torch::Tensor& x) {
  auto f = extract_features(x);
  DiscriminatorOutputs out;
  out.adv = adversarial_score(f);
  out.ab = attention_branch(f);
  out.cls1 = classify(apply_attention(f, out.ab.maps), 1);
  if (config_.complementary) {
    out.cab = complementary_attention_branch(f);
    out.cls2 = classify(apply_attention(f, out.cab->maps), 2);
  }
  return out;
}

torch::Tensor apply_attention(const torch::Tensor& f, const torch::Tensor& maps) {
  if (f.dim() != 4 || maps.dim() != 4 || f.size(0) != maps.size(0) || f.size(2) != maps.size(2) ||
      f.size(3) != maps.size(3))
    throw ShapeError("attention maps must match the feature batch and spatial size");
  return f.unsqueeze(1) * maps.unsqueeze(2);
}

}  // namespace faceedit
