#include "faceedit/losses.hpp"

#include <cmath>

#include <torch/torch.h>

#include "faceedit/errors.hpp"

namespace faceedit {

void LossWeights::validate() const {
  for (double w : {attention, d_classification, matching, g_classification, reconstruction, gradient_penalty})
    if (!std::isfinite(w) || w < 0.0) throw ConfigError("loss weights must be finite and non-negative");
}

AttributeVector complement_vector(const AttributeVector& v) {
  std::vector<std::uint8_t> c(v.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (v[i] > 1) throw DomainError("complement of a non-binary attribute vector");
    c[i] = static_cast<std::uint8_t>(1 - v[i]);
  }
  return AttributeVector(std::move(c), v.names());
}

torch::Tensor complement_tensor(const torch::Tensor& v) {
  if (!((v == 0) | (v == 1)).all().item<bool>()) throw DomainError("complement of a non-binary attribute tensor");
  return 1 - v;
}

torch::Tensor binary_cross_entropy(const torch::Tensor& p, const torch::Tensor& t) {
  if (!p.sizes().equals(t.sizes())) throw ShapeError("probabilities and targets differ in shape");
  if (torch::isnan(p).any().item<bool>()) throw NumericError("NaN probability passed to cross-entropy");
  // 1 - 1e-8 rounds to 1 in float32, so clamp and take logs in float64.
  auto pc = p.to(torch::kFloat64).clamp(kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
  auto td = t.to(torch::kFloat64);
  auto per_item = -(td * torch::log(pc) + (1 - td) * torch::log(1 - pc));
  auto loss = per_item.dim() <= 1 ? per_item.sum() : per_item.sum(-1).mean();
  return loss.to(p.scalar_type());
}

torch::Tensor loss_attention_ab(const torch::Tensor& p_ab, const torch::Tensor& source) {
  return faceedit::binary_cross_entropy(p_ab, source);
}

torch::Tensor loss_attention_cab(const torch::Tensor& p_cab, const torch::Tensor& source) {
  return faceedit::binary_cross_entropy(p_cab, 1 - source);
}

torch::Tensor loss_cls_d(const torch::Tensor& p_cls1, const torch::Tensor& p_cls2, const torch::Tensor& source) {
  return faceedit::binary_cross_entropy(p_cls1, source) + faceedit::binary_cross_entropy(p_cls2, source);
}

torch::Tensor loss_cls_g(const torch::Tensor& p_cls1, const torch::Tensor& p_cls2, const torch::Tensor& target) {
  return faceedit::binary_cross_entropy(p_cls1, target) + faceedit::binary_cross_entropy(p_cls2, target);
}

torch::Tensor gradient_penalty_at(const Critic& critic, const torch::Tensor& real, const torch::Tensor& fake,
                                  const torch::Tensor& alpha) {
  if (!real.sizes().equals(fake.sizes())) throw ShapeError("gradient penalty needs equally shaped real/fake batches");
  std::vector<std::int64_t> shape(static_cast<std::size_t>(real.dim()), 1);
  shape[0] = real.size(0);
  auto a = alpha.to(real.dtype()).view(shape);
  auto mixed = a * real + (1 - a) * fake;
  if (!mixed.requires_grad()) mixed.requires_grad_(true);
  auto scores = critic(mixed);
  // A critic that ignores its input has zero gradient everywhere.
  torch::Tensor g;
  if (scores.requires_grad()) {
    auto grads = torch::autograd::grad({scores.sum()}, {mixed}, /*grad_outputs=*/{}, /*retain_graph=*/true,
                                       /*create_graph=*/true, /*allow_unused=*/true);
    g = grads[0];
  }
  if (!g.defined()) g = torch::zeros_like(mixed);
  auto norm = g.flatten(1).norm(2, 1);
  return (norm - 1).pow(2).mean();
}

torch::Tensor gradient_penalty(const Critic& critic, const torch::Tensor& real, const torch::Tensor& fake,
                               at::Generator& rng) {
  auto alpha = torch::rand({real.size(0)}, rng, torch::TensorOptions().dtype(real.dtype()));
  return gradient_penalty_at(critic, real, fake, alpha);
}

torch::Tensor loss_adv_d(const torch::Tensor& scores_real, const torch::Tensor& scores_fake, const torch::Tensor& gp,
                         double lambda_gp) {
  if (scores_real.numel() == 0 || scores_fake.numel() == 0) throw ShapeError("adversarial loss needs nonempty batches");
  return scores_real.mean() - scores_fake.mean() - lambda_gp * gp;
}

torch::Tensor loss_adv_g(const torch::Tensor& scores_fake) {
  if (scores_fake.numel() == 0) throw ShapeError("adversarial loss needs a nonempty batch");
  return scores_fake.mean();
}

torch::Tensor loss_complementary_matching(const torch::Tensor& a_x, const torch::Tensor& ac_x,
                                          const torch::Tensor& a_y, const torch::Tensor& ac_y,
                                          const torch::Tensor& difference) {
  for (const auto* t : {&ac_x, &a_y, &ac_y})
    if (!t->sizes().equals(a_x.sizes())) throw ShapeError("attention feature stacks differ in shape");
  if (a_x.dim() != 4 || difference.dim() != 2 || difference.size(0) != a_x.size(0) ||
      difference.size(1) != a_x.size(1))
    throw ShapeError("matching loss expects B x k x h x w features and a B x k difference");

  auto changed = difference.abs().to(a_x.dtype()).view({a_x.size(0), a_x.size(1), 1, 1});
  auto p = changed * ac_y + (1 - changed) * a_y;
  auto q = changed * a_y + (1 - changed) * ac_y;
  // Per channel: mean over the h*w elements; then sum over channels, mean over batch.
  auto per_channel = (a_x - p).abs().mean({2, 3}) + (ac_x - q).abs().mean({2, 3});
  return per_channel.sum(1).mean();
}

torch::Tensor loss_reconstruction(const torch::Tensor& x, const torch::Tensor& x_rec) {
  if (!x.sizes().equals(x_rec.sizes())) throw ShapeError("reconstruction target and output differ in shape");
  return (x - x_rec).abs().mean();
}

torch::Tensor total_loss_d(const DiscriminatorLossParts& parts, const LossWeights& w) {
  return -parts.adv + w.attention * (parts.ab + parts.cab) + w.d_classification * parts.cls;
}

torch::Tensor total_loss_g(const GeneratorLossParts& parts, const LossWeights& w) {
  return parts.adv + w.matching * parts.matching + w.g_classification * parts.cls + w.reconstruction * parts.rec;
}

}  // namespace faceedit
