#include "faceedit/generator.hpp"

#include <torch/torch.h>

#include "faceedit/errors.hpp"

namespace faceedit {

namespace nn = torch::nn;

DifferenceVector diff_vector(const AttributeVector& target, const AttributeVector& source) {
  if (target.size() != source.size())
    throw ShapeError("difference of attribute vectors with lengths " + std::to_string(target.size()) + " and " +
                     std::to_string(source.size()));
  std::vector<std::int8_t> d(target.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    d[i] = static_cast<std::int8_t>(int(target[i]) - int(source[i]));
  return DifferenceVector(std::move(d));
}

SkipMode parse_skip_mode(const std::string& name) {
  if (name == "gated") return SkipMode::kGated;
  if (name == "concat") return SkipMode::kConcat;
  if (name == "none") return SkipMode::kNone;
  throw ConfigError("unknown skip mode '" + name + "' (expected gated, concat or none)");
}

std::string to_string(SkipMode mode) {
  switch (mode) {
    case SkipMode::kGated:
      return "gated";
    case SkipMode::kConcat:
      return "concat";
    case SkipMode::kNone:
      return "none";
  }
  return "?";
}

void GeneratorConfig::validate() const {
  if (levels < 1) throw ConfigError("generator needs at least one level");
  if (attributes < 1) throw ConfigError("generator needs k >= 1");
  if (base_width < 1 || max_width < base_width) throw ConfigError("invalid generator widths");
  if (resolution % (std::int64_t{1} << levels) != 0)
    throw ConfigError("resolution " + std::to_string(resolution) + " is not divisible by 2^" +
                      std::to_string(levels));
}

std::int64_t GeneratorConfig::width(std::int64_t level) const {
  return std::min(base_width << (level - 1), max_width);
}

bool GeneratorConfig::has_skip(std::int64_t level) const {
  if (skip_mode == SkipMode::kNone || level >= levels) return false;
  return skip_levels < 0 || level <= skip_levels;
}

torch::Tensor broadcast_planes(const torch::Tensor& v, std::int64_t h, std::int64_t w) {
  return v.view({v.size(0), v.size(1), 1, 1}).expand({v.size(0), v.size(1), h, w});
}

SkipGateImpl::SkipGateImpl(std::int64_t channels, std::int64_t attributes) {
  gate_ = register_module("gate", nn::Conv2d(nn::Conv2dOptions(channels + attributes, channels, 3).padding(1)));
  candidate_ =
      register_module("candidate", nn::Conv2d(nn::Conv2dOptions(channels + attributes, channels, 3).padding(1)));
}

torch::Tensor SkipGateImpl::forward(const torch::Tensor& feature, const torch::Tensor& difference) {
  auto in = torch::cat({feature, broadcast_planes(difference, feature.size(2), feature.size(3))}, 1);
  auto g = torch::sigmoid(gate_->forward(in));
  return g * feature + (1 - g) * torch::tanh(candidate_->forward(in));
}

GeneratorImpl::GeneratorImpl(GeneratorConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto L = config_.levels;
  const auto k = config_.attributes;

  encoder_ = register_module("encoder", nn::ModuleList());
  std::int64_t in = 3;
  for (std::int64_t l = 1; l <= L; ++l) {
    const auto out = config_.width(l);
    encoder_->push_back(nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, out, 4).stride(2).padding(1)),
                                       nn::InstanceNorm2d(nn::InstanceNorm2dOptions(out).affine(true)),
                                       nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2))));
    in = out;
  }

  gates_ = register_module("gates", nn::ModuleList());
  gate_index_.assign(static_cast<std::size_t>(L), -1);
  for (std::int64_t l = 1; l < L; ++l)
    if (config_.has_skip(l) && config_.skip_mode == SkipMode::kGated) {
      gate_index_[static_cast<std::size_t>(l - 1)] = static_cast<std::int64_t>(gates_->size());
      gates_->push_back(SkipGate(config_.width(l), k));
    }

  decoder_ = register_module("decoder", nn::ModuleList());
  for (std::int64_t l = L; l >= 1; --l) {
    const auto in_ch = l == L ? config_.width(L) + k : config_.width(l) + (config_.has_skip(l) ? config_.width(l) : 0);
    const auto up = nn::ConvTranspose2d(
        nn::ConvTranspose2dOptions(in_ch, l > 1 ? config_.width(l - 1) : 3, 4).stride(2).padding(1));
    if (l > 1)
      decoder_->push_back(nn::Sequential(up, nn::InstanceNorm2d(nn::InstanceNorm2dOptions(config_.width(l - 1)).affine(true)),
                                         nn::ReLU()));
    else
      decoder_->push_back(nn::Sequential(up, nn::Tanh()));
  }
}

LatentRepresentation GeneratorImpl::encode(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 3 || x.size(2) != config_.resolution || x.size(3) != config_.resolution)
    throw ShapeError("generator expects B x 3 x " + std::to_string(config_.resolution) + " x " +
                     std::to_string(config_.resolution) + " input");
  LatentRepresentation z;
  auto h = x;
  for (std::size_t l = 0; l < encoder_->size(); ++l) {
    h = encoder_[l]->as<nn::Sequential>()->forward(h);
    if (l + 1 < encoder_->size()) z.features.push_back(h);
  }
  z.bottleneck = h;
  return z;
}

torch::Tensor GeneratorImpl::decode(const LatentRepresentation& z, const torch::Tensor& difference) {
  const auto L = config_.levels;
  if (static_cast<std::int64_t>(z.features.size()) != L - 1 || z.bottleneck.size(1) != config_.width(L))
    throw ShapeError("latent representation does not match the generator configuration");
  if (difference.dim() != 2 || difference.size(0) != z.bottleneck.size(0) || difference.size(1) != config_.attributes)
    throw ShapeError("difference vector batch must be B x " + std::to_string(config_.attributes));

  auto d = difference.to(z.bottleneck.dtype());
  auto h = torch::cat({z.bottleneck, broadcast_planes(d, z.bottleneck.size(2), z.bottleneck.size(3))}, 1);
  for (std::int64_t l = L; l >= 1; --l) {
    if (l < L && config_.has_skip(l)) {
      const auto& feature = z.features[static_cast<std::size_t>(l - 1)];
      const auto gi = gate_index_[static_cast<std::size_t>(l - 1)];
      auto skip = gi >= 0 ? gates_[static_cast<std::size_t>(gi)]->as<SkipGate>()->forward(feature, d) : feature;
      h = torch::cat({h, skip}, 1);
    }
    h = decoder_[static_cast<std::size_t>(L - l)]->as<nn::Sequential>()->forward(h);
  }
  return h;
}

torch::Tensor GeneratorImpl::edit(const torch::Tensor& x, const torch::Tensor& source, const torch::Tensor& target) {
  return decode(encode(x), difference_tensor(target, source));
}

}  // namespace faceedit
