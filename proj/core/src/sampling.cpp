#include "faceedit/sampling.hpp"

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

#include "faceedit/errors.hpp"

namespace faceedit {

TargetPolicy parse_target_policy(const std::string& name) {
  if (name == "shuffle-batch-labels") return TargetPolicy::kShuffleBatchLabels;
  if (name == "uniform-random-flip") return TargetPolicy::kUniformRandomFlip;
  throw ConfigError("unknown target sampling policy '" + name +
                    "' (expected shuffle-batch-labels or uniform-random-flip)");
}

std::string to_string(TargetPolicy policy) {
  return policy == TargetPolicy::kShuffleBatchLabels ? "shuffle-batch-labels" : "uniform-random-flip";
}

torch::Tensor sample_target_batch(const torch::Tensor& source, TargetPolicy policy, at::Generator& rng,
                                  double flip_probability) {
  if (source.dim() != 2) throw ShapeError("source labels must be N x k");
  switch (policy) {
    case TargetPolicy::kShuffleBatchLabels: {
      auto perm = torch::randperm(source.size(0), rng, torch::kLong);
      return source.index_select(0, perm);
    }
    case TargetPolicy::kUniformRandomFlip: {
      if (flip_probability < 0.0 || flip_probability > 1.0)
        throw ConfigError("flip probability must lie in [0,1]");
      auto u = torch::rand(source.sizes(), rng, torch::TensorOptions().dtype(source.dtype()));
      auto flip = (u < flip_probability).to(source.dtype());
      return source + flip * (1 - 2 * source);
    }
  }
  throw ConfigError("unhandled target policy");
}

AttributeVector sample_target_vector(const AttributeVector& source, at::Generator& rng, TargetPolicy policy,
                                     double flip_probability) {
  auto t = sample_target_batch(source.to_tensor(), policy, rng, flip_probability);
  std::vector<std::uint8_t> values(source.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    values[i] = t[0][static_cast<std::int64_t>(i)].item<float>() > 0.5f ? 1 : 0;
  return AttributeVector(std::move(values), source.names());
}

at::Generator make_generator(std::uint64_t seed) { return at::make_generator<at::CPUGeneratorImpl>(seed); }

}  // namespace faceedit
