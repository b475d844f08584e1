#pragma once

#include <string>

#include <ATen/core/Generator.h>
#include <torch/types.h>

#include "faceedit/attributes.hpp"

namespace faceedit {

enum class TargetPolicy {
  kShuffleBatchLabels,  // v_t is a permutation of the batch's source labels
  kUniformRandomFlip,   // each bit flipped independently with a fixed probability
};

TargetPolicy parse_target_policy(const std::string& name);
std::string to_string(TargetPolicy policy);

// Draws target labels for an N x k source batch. Deterministic for a given
// generator state.
torch::Tensor sample_target_batch(const torch::Tensor& source, TargetPolicy policy, at::Generator& rng,
                                  double flip_probability = 0.5);

// Single-vector form. Under shuffle-batch-labels a lone vector is its own batch.
AttributeVector sample_target_vector(const AttributeVector& source, at::Generator& rng, TargetPolicy policy,
                                     double flip_probability = 0.5);

at::Generator make_generator(std::uint64_t seed);

}  // namespace faceedit
