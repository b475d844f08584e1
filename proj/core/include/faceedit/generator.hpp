#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/nn/module.h>
#include <torch/nn/modules/container/modulelist.h>
#include <torch/nn/modules/container/sequential.h>
#include <torch/nn/modules/conv.h>
#include <torch/nn/pimpl.h>

#include "faceedit/attributes.hpp"

namespace faceedit {

// v_t - v_s, elementwise. Throws ShapeError on length mismatch.
DifferenceVector diff_vector(const AttributeVector& target, const AttributeVector& source);

enum class SkipMode { kGated, kConcat, kNone };

SkipMode parse_skip_mode(const std::string& name);
std::string to_string(SkipMode mode);

struct GeneratorConfig {
  std::int64_t resolution = 128;
  std::int64_t attributes = 13;
  std::int64_t levels = 5;
  std::int64_t base_width = 32;
  std::int64_t max_width = 1024;
  SkipMode skip_mode = SkipMode::kGated;
  // How many of the outermost levels (1 = full-resolution side) carry a skip.
  // Negative means every level except the bottleneck.
  std::int64_t skip_levels = -1;

  void validate() const;
  // Channel width of encoder level `level` in [1, levels].
  std::int64_t width(std::int64_t level) const;
  bool has_skip(std::int64_t level) const;
};

// Bottleneck plus the encoder features kept for skip connections.
struct LatentRepresentation {
  torch::Tensor bottleneck;             // B x C_L x R/2^L x R/2^L
  std::vector<torch::Tensor> features;  // features[l-1] is level l, l in [1, L-1]
};

// Learned convex mix between an encoder feature and a v_d-conditioned
// candidate: g * e + (1 - g) * tanh(W_c [e; v_d]), g = sigmoid(W_g [e; v_d]).
class SkipGateImpl : public torch::nn::Module {
 public:
  SkipGateImpl(std::int64_t channels, std::int64_t attributes);
  torch::Tensor forward(const torch::Tensor& feature, const torch::Tensor& difference);

 private:
  torch::nn::Conv2d gate_{nullptr};
  torch::nn::Conv2d candidate_{nullptr};
};
TORCH_MODULE(SkipGate);

class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(GeneratorConfig config);

  LatentRepresentation encode(const torch::Tensor& x);
  // `difference` is B x k with entries in {-1,0,1}. Output in [-1, 1].
  torch::Tensor decode(const LatentRepresentation& z, const torch::Tensor& difference);
  // decode(encode(x), target - source)
  torch::Tensor edit(const torch::Tensor& x, const torch::Tensor& source, const torch::Tensor& target);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& difference) {
    return decode(encode(x), difference);
  }

  const GeneratorConfig& config() const noexcept { return config_; }

 private:
  GeneratorConfig config_;
  torch::nn::ModuleList encoder_;
  torch::nn::ModuleList decoder_;  // decoder_[0] upsamples the bottleneck
  torch::nn::ModuleList gates_;    // one per gated level, level order
  std::vector<std::int64_t> gate_index_;
};
TORCH_MODULE(Generator);

// Broadcasts a B x k vector to B x k x h x w constant planes.
torch::Tensor broadcast_planes(const torch::Tensor& v, std::int64_t h, std::int64_t w);

}  // namespace faceedit
