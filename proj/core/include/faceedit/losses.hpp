#pragma once

#include <functional>

#include <ATen/core/Generator.h>
#include <torch/types.h>

#include "faceedit/attributes.hpp"

namespace faceedit {

// Coefficients of the discriminator and generator objectives.
struct LossWeights {
  double attention = 1.0;       // AB + CAB attention losses
  double d_classification = 1.0;
  double matching = 1.0;        // complementary matching
  double g_classification = 10.0;
  double reconstruction = 100.0;
  double gradient_penalty = 10.0;

  void validate() const;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

inline constexpr double kProbabilityEpsilon = 1e-8;

// 1 - v. Throws DomainError on a non-binary entry.
AttributeVector complement_vector(const AttributeVector& v);
torch::Tensor complement_tensor(const torch::Tensor& v);

// -sum_i [t_i log p_i + (1 - t_i) log(1 - p_i)], averaged over the batch.
// p is clamped to [eps, 1 - eps]. Inputs are B x k (or k).
torch::Tensor binary_cross_entropy(const torch::Tensor& p, const torch::Tensor& t);

torch::Tensor loss_attention_ab(const torch::Tensor& p_ab, const torch::Tensor& source);
torch::Tensor loss_attention_cab(const torch::Tensor& p_cab, const torch::Tensor& source);
torch::Tensor loss_cls_d(const torch::Tensor& p_cls1, const torch::Tensor& p_cls2, const torch::Tensor& source);
torch::Tensor loss_cls_g(const torch::Tensor& p_cls1, const torch::Tensor& p_cls2, const torch::Tensor& target);

using Critic = std::function<torch::Tensor(const torch::Tensor&)>;

// Mean over the batch of (||grad_xhat critic(xhat)||_2 - 1)^2 with
// xhat = a x + (1 - a) y, a ~ U[0,1] per sample. The result stays attached to
// the graph so it can be differentiated w.r.t. the critic's parameters.
torch::Tensor gradient_penalty(const Critic& critic, const torch::Tensor& real, const torch::Tensor& fake,
                               at::Generator& rng);
// Same, with caller-supplied per-sample mixing weights (B).
torch::Tensor gradient_penalty_at(const Critic& critic, const torch::Tensor& real, const torch::Tensor& fake,
                                  const torch::Tensor& alpha);

// E[D(x)] - E[D(y)] - lambda_gp * gp. The discriminator maximises this.
torch::Tensor loss_adv_d(const torch::Tensor& scores_real, const torch::Tensor& scores_fake, const torch::Tensor& gp,
                         double lambda_gp);
// E[D(y)]; enters the generator objective negated.
torch::Tensor loss_adv_g(const torch::Tensor& scores_fake);

// Attention features are B x k x h x w; difference is B x k in {-1,0,1}.
// Unchanged attributes match same-branch channels, changed ones match the
// opposite branch. Each channel's L1 is divided by h*w.
torch::Tensor loss_complementary_matching(const torch::Tensor& a_x, const torch::Tensor& ac_x,
                                          const torch::Tensor& a_y, const torch::Tensor& ac_y,
                                          const torch::Tensor& difference);

// Mean absolute error.
torch::Tensor loss_reconstruction(const torch::Tensor& x, const torch::Tensor& x_rec);

struct DiscriminatorLossParts {
  torch::Tensor adv;  // L_D_adv (already includes -lambda_gp * gp)
  torch::Tensor ab;
  torch::Tensor cab;
  torch::Tensor cls;
};

struct GeneratorLossParts {
  torch::Tensor adv;  // adversarial term in minimisation form: -E[D(y)]
  torch::Tensor matching;
  torch::Tensor cls;
  torch::Tensor rec;
};

// -adv + w_att (ab + cab) + w_dcls cls
torch::Tensor total_loss_d(const DiscriminatorLossParts& parts, const LossWeights& w);
// adv + w_cm matching + w_gcls cls + w_rec rec
torch::Tensor total_loss_g(const GeneratorLossParts& parts, const LossWeights& w);

}  // namespace faceedit
