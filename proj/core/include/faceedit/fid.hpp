#pragma once

#include <cstdint>
#include <functional>

#include <torch/types.h>

namespace faceedit {

inline constexpr std::int64_t kMinFidImages = 64;
inline constexpr double kFidEpsilon = 1e-6;

// Mean (d) and unbiased covariance (d x d) of N x d features, in float64.
struct GaussianFit {
  torch::Tensor mean;
  torch::Tensor cov;
};

GaussianFit gaussian_fit(const torch::Tensor& features);

// |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)). The trace of the root is
// taken from the eigenvalues of S_a^(1/2) S_b S_a^(1/2). If that fails to
// produce a finite value, both covariances get eps * I and it is retried.
double frechet_distance(const GaussianFit& a, const GaussianFit& b, double eps = kFidEpsilon);

// Features already embedded, N x d each. No minimum set size.
double fid_from_features(const torch::Tensor& a, const torch::Tensor& b);

// Images B x 3 x R x R in [-1, 1] -> B x d features.
using Embedder = std::function<torch::Tensor(const torch::Tensor&)>;

// Both sets need at least kMinFidImages images. Embeds in batches.
double compute_fid(const torch::Tensor& set_a, const torch::Tensor& set_b, const Embedder& embedder,
                   std::int64_t batch_size = 128);

}  // namespace faceedit
