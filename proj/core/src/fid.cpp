#include "faceedit/fid.hpp"

#include <cmath>
#include <string>

#include <torch/torch.h>

#include "faceedit/errors.hpp"

namespace faceedit {

namespace {

torch::Tensor symmetric_sqrt(const torch::Tensor& s) {
  auto [values, vectors] = torch::linalg_eigh(0.5 * (s + s.t()));
  return vectors.matmul(torch::diag(values.clamp_min(0).sqrt())).matmul(vectors.t());
}

// tr sqrt(sqrt(A) B sqrt(A)) is the nuclear norm of sqrt(B) sqrt(A). Singular values avoid taking square roots of
// rounding noise in the near-null eigenvalues, which matters for rank-deficient feature covariances.
double trace_sqrt_product(const torch::Tensor& a, const torch::Tensor& b) {
  return torch::linalg_svdvals(symmetric_sqrt(b).matmul(symmetric_sqrt(a))).sum().item<double>();
}

torch::Tensor embed_all(const torch::Tensor& images, const Embedder& embedder, std::int64_t batch_size) {
  std::vector<torch::Tensor> parts;
  torch::NoGradGuard no_grad;
  for (std::int64_t b = 0; b < images.size(0); b += batch_size) {
    auto f = embedder(images.slice(0, b, std::min(images.size(0), b + batch_size)));
    if (f.dim() != 2) throw ShapeError("embedder must return B x d features");
    parts.push_back(f.to(torch::kFloat64));
  }
  return torch::cat(parts);
}

}  // namespace

GaussianFit gaussian_fit(const torch::Tensor& features) {
  if (features.dim() != 2) throw ShapeError("features must be N x d");
  if (features.size(0) < 2) throw Error("a Gaussian fit needs at least two samples");
  auto f = features.to(torch::kFloat64);
  auto mean = f.mean(0);
  auto centred = f - mean;
  auto cov = centred.t().matmul(centred) / static_cast<double>(f.size(0) - 1);
  return {mean, cov};
}

double frechet_distance(const GaussianFit& a, const GaussianFit& b, double eps) {
  if (a.mean.numel() != b.mean.numel()) throw ShapeError("feature dimensions differ between the two sets");
  const auto mean_term = (a.mean - b.mean).pow(2).sum().item<double>();
  const auto trace_term = (a.cov.trace() + b.cov.trace()).item<double>();
  double root = trace_sqrt_product(a.cov, b.cov);
  if (!std::isfinite(root)) {
    auto eye = torch::eye(a.cov.size(0), a.cov.options()) * eps;
    root = trace_sqrt_product(a.cov + eye, b.cov + eye);
    if (!std::isfinite(root)) throw NumericError("covariance square root is not finite");
  }
  return mean_term + trace_term - 2 * root;
}

double fid_from_features(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.dim() != 2 || b.dim() != 2) throw ShapeError("features must be N x d");
  if (a.size(1) != b.size(1))
    throw ShapeError("feature dimensions differ: " + std::to_string(a.size(1)) + " vs " + std::to_string(b.size(1)));
  return frechet_distance(gaussian_fit(a), gaussian_fit(b));
}

double compute_fid(const torch::Tensor& set_a, const torch::Tensor& set_b, const Embedder& embedder,
                   std::int64_t batch_size) {
  if (set_a.size(0) < kMinFidImages || set_b.size(0) < kMinFidImages)
    throw ConfigError("FID needs at least " + std::to_string(kMinFidImages) + " images per set");
  return fid_from_features(embed_all(set_a, embedder, batch_size), embed_all(set_b, embedder, batch_size));
}

}  // namespace faceedit
