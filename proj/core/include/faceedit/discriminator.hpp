#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <torch/nn/module.h>
#include <torch/nn/modules/container/sequential.h>
#include <torch/nn/modules/conv.h>
#include <torch/nn/modules/linear.h>
#include <torch/nn/modules/instancenorm.h>
#include <torch/nn/modules/normalization.h>
#include <torch/nn/pimpl.h>

namespace faceedit {

// Per-sample normalisation in the discriminator's conv blocks. kLayer
// normalises over C x H x W jointly and so keeps per-channel means, which the
// GAP read-out of the attention branches depends on.
enum class NormKind { kInstance, kLayer, kNone };

NormKind parse_norm_kind(const std::string& name);
std::string to_string(NormKind kind);

struct DiscriminatorConfig {
  std::int64_t resolution = 128;
  std::int64_t attributes = 13;
  std::int64_t base_width = 32;
  std::int64_t max_width = 1024;
  // Total stride-2 blocks; the first `tap_blocks` form the shared extractor,
  // the rest are replicated in each head.
  std::int64_t blocks = 5;
  std::int64_t tap_blocks = 3;
  NormKind norm = NormKind::kInstance;
  // false builds the discriminator without the complementary branch and
  // without classifier head 2.
  bool complementary = true;

  void validate() const;
  std::int64_t width(std::int64_t block) const;
  std::int64_t feature_size() const { return resolution >> tap_blocks; }
};

// Outputs of one attention branch. A and M are B x k x h x w, p is B x k.
struct AttentionBundle {
  torch::Tensor features;  // A
  torch::Tensor maps;      // M, entries in (0,1)
  torch::Tensor probs;     // sigmoid(GAP(A))
};

struct DiscriminatorOutputs {
  torch::Tensor adv;     // B critic scores
  AttentionBundle ab;
  std::optional<AttentionBundle> cab;
  torch::Tensor cls1;    // B x k, classifier on f * M
  std::optional<torch::Tensor> cls2;  // B x k, classifier on f * M^c
};

// A = W_a f (1x1 conv to k channels); M = sigmoid(W_2 norm(W_1 A)); p = sigmoid(GAP(A)).
class AttentionBranchImpl : public torch::nn::Module {
 public:
  AttentionBranchImpl(std::int64_t in_channels, std::int64_t attributes);
  AttentionBundle forward(const torch::Tensor& f);

 private:
  torch::nn::Conv2d to_features_{nullptr};
  torch::nn::Conv2d map_in_{nullptr};
  torch::nn::InstanceNorm2d map_norm_{nullptr};
  torch::nn::Conv2d map_out_{nullptr};
};
TORCH_MODULE(AttentionBranch);

// Shared trunk applied to each attribute's attended stack, then one linear
// read-out per attribute.
class ClassifierHeadImpl : public torch::nn::Module {
 public:
  ClassifierHeadImpl(const DiscriminatorConfig& config);
  // attended: B x k x C x h x w -> B x k probabilities
  torch::Tensor forward(const torch::Tensor& attended);
  torch::Tensor readout_weight() const { return weight_; }

 private:
  torch::nn::Sequential trunk_{nullptr};
  torch::Tensor weight_;  // k x C
  torch::Tensor bias_;    // k
};
TORCH_MODULE(ClassifierHead);

class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(DiscriminatorConfig config);

  torch::Tensor extract_features(const torch::Tensor& x);
  AttentionBundle attention_branch(const torch::Tensor& f);
  AttentionBundle complementary_attention_branch(const torch::Tensor& f);
  // head is 1 or 2
  torch::Tensor classify(const torch::Tensor& attended, int head);
  torch::Tensor adversarial_score(const torch::Tensor& f);
  // D_adv(x) straight from images; the critic used by the gradient penalty.
  torch::Tensor critic(const torch::Tensor& x) { return adversarial_score(extract_features(x)); }

  DiscriminatorOutputs forward(const torch::Tensor& x);

  const DiscriminatorConfig& config() const noexcept { return config_; }
  bool has_complementary() const noexcept { return config_.complementary; }

 private:
  DiscriminatorConfig config_;
  torch::nn::Sequential extractor_{nullptr};
  AttentionBranch ab_{nullptr};
  AttentionBranch cab_{nullptr};
  ClassifierHead cls1_{nullptr};
  ClassifierHead cls2_{nullptr};
  torch::nn::Sequential adv_trunk_{nullptr};
  torch::nn::Linear adv_out_{nullptr};
};
TORCH_MODULE(Discriminator);

// f'_i = f * M_i for every attribute: f is B x C x h x w, maps B x k x h x w,
// result B x k x C x h x w.
torch::Tensor apply_attention(const torch::Tensor& f, const torch::Tensor& maps);

}  // namespace faceedit
