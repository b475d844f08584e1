#pragma once

#include <cstdint>
#include <filesystem>

#include <torch/nn/module.h>
#include <torch/nn/modules/container/sequential.h>
#include <torch/nn/modules/linear.h>
#include <torch/nn/pimpl.h>

#include "faceedit/attributes.hpp"
#include "faceedit/dataset.hpp"

namespace faceedit {

// Small multi-label CNN used only to score edits. It shares nothing with the
// discriminator.
class AttributeClassifierImpl : public torch::nn::Module {
 public:
  AttributeClassifierImpl(std::int64_t resolution, std::int64_t attributes, std::int64_t width = 16);

  // Penultimate embedding, B x embedding_size().
  torch::Tensor embed(const torch::Tensor& x);
  torch::Tensor logits(const torch::Tensor& x);
  torch::Tensor forward(const torch::Tensor& x) { return torch::sigmoid(logits(x)); }

  std::int64_t resolution() const noexcept { return resolution_; }
  std::int64_t embedding_size() const noexcept { return 64; }

 private:
  std::int64_t resolution_;
  torch::nn::Sequential body_{nullptr};
  torch::nn::Sequential hidden_{nullptr};
  torch::nn::Linear out_{nullptr};
};
TORCH_MODULE(AttributeClassifier);

struct ClassifierTrainOptions {
  std::int64_t epochs = 15;
  std::int64_t batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  std::int64_t width = 16;
  // Held-out accuracy below this is an underfit and raises an error.
  double min_accuracy = 0.85;
};

class EvalClassifier {
 public:
  EvalClassifier(AttributeClassifier net, AttributeNames names, double heldout_accuracy);

  // Probabilities, B x k. Rejects inputs at the wrong resolution.
  torch::Tensor predict(const torch::Tensor& x) const;
  torch::Tensor embed(const torch::Tensor& x) const;
  AttributeVector estimate(const torch::Tensor& image) const;

  const AttributeNames& names() const noexcept { return names_; }
  std::int64_t resolution() const noexcept { return net_->resolution(); }
  double heldout_accuracy() const noexcept { return heldout_accuracy_; }

  void save(const std::filesystem::path& path) const;
  static EvalClassifier load(const std::filesystem::path& path);

 private:
  void check_input(const torch::Tensor& x) const;

  mutable AttributeClassifier net_;
  AttributeNames names_;
  double heldout_accuracy_;
};

// Mean over attributes and samples of thresholded agreement with the labels.
double multilabel_accuracy(const EvalClassifier& classifier, const Dataset& data, std::int64_t batch_size = 128);

EvalClassifier train_eval_classifier(const Dataset& train, const Dataset& heldout,
                                     const ClassifierTrainOptions& options = {});

}  // namespace faceedit
