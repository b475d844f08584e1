#include <cmath>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "faceedit/errors.hpp"
#include "faceedit/losses.hpp"
#include "faceedit/sampling.hpp"
#include "test_util.hpp"

using namespace faceedit;
using faceedit::testing::f64;
using faceedit::testing::gradient_error;

namespace {

constexpr double kLn2 = 0.6931471805599453;

torch::Tensor rand_prob(std::vector<std::int64_t> shape) {
  return torch::rand(shape, torch::kFloat64) * 0.8 + 0.1;
}

torch::Tensor rand_bits(std::vector<std::int64_t> shape) {
  return torch::randint(0, 2, shape, torch::kFloat64);
}

// Independent element loop for the matching term.
double brute_force_matching(const torch::Tensor& ax, const torch::Tensor& acx, const torch::Tensor& ay,
                            const torch::Tensor& acy, const torch::Tensor& d) {
  const auto b = ax.size(0), k = ax.size(1), h = ax.size(2), w = ax.size(3);
  double total = 0;
  for (std::int64_t n = 0; n < b; ++n) {
    for (std::int64_t i = 0; i < k; ++i) {
      const bool swap = std::abs(d[n][i].item<double>()) == 1.0;
      double s = 0;
      for (std::int64_t r = 0; r < h; ++r)
        for (std::int64_t c = 0; c < w; ++c) {
          const double p = (swap ? acy : ay)[n][i][r][c].item<double>();
          const double q = (swap ? ay : acy)[n][i][r][c].item<double>();
          s += std::abs(ax[n][i][r][c].item<double>() - p) + std::abs(acx[n][i][r][c].item<double>() - q);
        }
      total += s / static_cast<double>(h * w);
    }
  }
  return total / static_cast<double>(b);
}

}  // namespace

TEST(BinaryCrossEntropy, HalfProbabilitiesOracle) {
  EXPECT_NEAR(faceedit::binary_cross_entropy(f64({0.5, 0.5}), f64({1, 0})).item<double>(), 1.386294, 1e-6);
}

TEST(BinaryCrossEntropy, ExactTargetsClampToTinyValue) {
  auto t = f64({1, 0, 1});
  const double v = faceedit::binary_cross_entropy(t.clone(), t).item<double>();
  EXPECT_GE(v, 0.0);
  EXPECT_LE(v, 3 * 2e-8);
}

TEST(BinaryCrossEntropy, SaturatedFloat32StaysFinite) {
  auto p = torch::tensor({1.0f, 0.0f});
  auto t = torch::tensor({1.0f, 0.0f});
  EXPECT_TRUE(std::isfinite(faceedit::binary_cross_entropy(p, t).item<double>()));
  EXPECT_TRUE(std::isfinite(faceedit::binary_cross_entropy(p, 1 - t).item<double>()));
}

TEST(BinaryCrossEntropy, NanRaises) {
  EXPECT_THROW(faceedit::binary_cross_entropy(f64({NAN, 0.5}), f64({1, 0})), NumericError);
}

TEST(BinaryCrossEntropy, ShapeMismatchRaises) {
  EXPECT_THROW(faceedit::binary_cross_entropy(f64({0.5, 0.5}), f64({1})), ShapeError);
}

TEST(BinaryCrossEntropy, BatchMeanOfPerSampleSums) {
  auto p = torch::tensor({{0.5, 0.5}, {0.9, 0.2}}, torch::kFloat64);
  auto t = torch::tensor({{1.0, 0.0}, {1.0, 0.0}}, torch::kFloat64);
  const double row0 = 2 * kLn2, row1 = -std::log(0.9) - std::log(0.8);
  EXPECT_NEAR(faceedit::binary_cross_entropy(p, t).item<double>(), (row0 + row1) / 2, 1e-12);
}

TEST(AttentionLoss, AbAtHalfIsKLn2) {
  for (int k : {1, 3, 13}) {
    auto p = torch::full({k}, 0.5, torch::kFloat64);
    EXPECT_NEAR(loss_attention_ab(p, rand_bits({k})).item<double>(), k * kLn2, 1e-6);
  }
}

TEST(AttentionLoss, AbEqualsBce) {
  auto p = rand_prob({4, 5});
  auto v = rand_bits({4, 5});
  EXPECT_EQ(loss_attention_ab(p, v).item<double>(), faceedit::binary_cross_entropy(p, v).item<double>());
}

TEST(AttentionLoss, CabAllOnesAtHalfIsKLn2) {
  auto p = torch::full({6}, 0.5, torch::kFloat64);
  EXPECT_NEAR(loss_attention_cab(p, torch::ones({6}, torch::kFloat64)).item<double>(), 6 * kLn2, 1e-6);
}

TEST(AttentionLoss, CabOptimumAtComplement) {
  auto v = f64({1, 0, 1, 1});
  EXPECT_LE(loss_attention_cab(1 - v, v).item<double>(), 4 * 2e-8);
}

TEST(AttentionLoss, AbCabDualityFuzz) {
  torch::manual_seed(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto p = rand_prob({3, 7});
    auto v = rand_bits({3, 7});
    EXPECT_DOUBLE_EQ(loss_attention_cab(p, v).item<double>(), loss_attention_ab(p, 1 - v).item<double>());
  }
}

TEST(ClassificationLoss, DiscriminatorAtHalfIs2KLn2) {
  auto half = torch::full({2, 4}, 0.5, torch::kFloat64);
  EXPECT_NEAR(loss_cls_d(half, half, rand_bits({2, 4})).item<double>(), 2 * 4 * kLn2, 1e-6);
}

TEST(ClassificationLoss, PerfectHeadsGiveZero) {
  auto v = rand_bits({3, 5});
  EXPECT_LE(loss_cls_d(v, v, v).item<double>(), 2 * 5 * 2e-8);
  EXPECT_LE(loss_cls_g(v, v, v).item<double>(), 2 * 5 * 2e-8);
}

TEST(ClassificationLoss, SymmetricInHeadsAndSharedForm) {
  auto p1 = rand_prob({3, 5}), p2 = rand_prob({3, 5});
  auto v = rand_bits({3, 5});
  EXPECT_DOUBLE_EQ(loss_cls_d(p1, p2, v).item<double>(), loss_cls_d(p2, p1, v).item<double>());
  EXPECT_DOUBLE_EQ(loss_cls_g(p1, p2, v).item<double>(), loss_cls_d(p1, p2, v).item<double>());
}

TEST(GradientPenalty, UnitGradientLinearCriticIsZero) {
  const std::int64_t d = 12;
  const double c = 1.0 / std::sqrt(static_cast<double>(d));
  Critic critic = [c](const torch::Tensor& z) { return c * z.flatten(1).sum(1); };
  auto real = torch::randn({4, 3, 2, 2}, torch::kFloat64), fake = torch::randn({4, 3, 2, 2}, torch::kFloat64);
  auto gp = gradient_penalty_at(critic, real, fake, torch::rand({4}, torch::kFloat64));
  EXPECT_NEAR(gp.item<double>(), 0.0, 1e-6);
}

TEST(GradientPenalty, ConstantCriticIsOne) {
  Critic critic = [](const torch::Tensor& z) { return torch::full({z.size(0)}, 3.0, z.options()); };
  auto real = torch::randn({4, 6}, torch::kFloat64), fake = torch::randn({4, 6}, torch::kFloat64);
  auto rng = make_generator(1);
  EXPECT_NEAR(gradient_penalty(critic, real, fake, rng).item<double>(), 1.0, 1e-6);
}

TEST(GradientPenalty, ScaledLinearCriticClosedForm) {
  const std::int64_t d = 5;
  for (double c : {0.1, 0.7, 2.0, 5.0}) {
    Critic critic = [c](const torch::Tensor& z) { return c * z.sum(1); };
    const double g = c * std::sqrt(static_cast<double>(d));
    auto real = torch::randn({3, d}, torch::kFloat64), fake = torch::randn({3, d}, torch::kFloat64);
    auto gp = gradient_penalty_at(critic, real, fake, torch::rand({3}, torch::kFloat64));
    EXPECT_NEAR(gp.item<double>(), (g - 1) * (g - 1), 1e-6) << "c=" << c;
  }
}

TEST(AdversarialLoss, Fixtures) {
  EXPECT_DOUBLE_EQ(loss_adv_d(f64({1, 1}), f64({0, 0}), torch::tensor(0.5, torch::kFloat64), 10).item<double>(), -4.0);
  auto s = f64({0.3, -1.2, 2.0});
  EXPECT_DOUBLE_EQ(loss_adv_d(s, s, torch::tensor(0.0, torch::kFloat64), 10).item<double>(), 0.0);
  EXPECT_DOUBLE_EQ(loss_adv_g(f64({0, 0})).item<double>(), 0.0);
  EXPECT_DOUBLE_EQ(loss_adv_g(f64({1, 3})).item<double>(), 2.0);
}

TEST(AdversarialLoss, LinearInLambdaGp) {
  auto r = f64({0.4, 1.0}), f = f64({-0.3, 0.2});
  auto gp = torch::tensor(0.37, torch::kFloat64);
  const double at0 = loss_adv_d(r, f, gp, 0).item<double>();
  for (double l : {1.0, 2.5, 10.0}) EXPECT_NEAR(loss_adv_d(r, f, gp, l).item<double>(), at0 - l * 0.37, 1e-12);
}

TEST(MatchingLoss, UnchangedBranchIsZero) {
  auto a = torch::randn({2, 3, 4, 4}, torch::kFloat64), ac = torch::randn({2, 3, 4, 4}, torch::kFloat64);
  EXPECT_EQ(loss_complementary_matching(a, ac, a, ac, torch::zeros({2, 3}, torch::kFloat64)).item<double>(), 0.0);
}

TEST(MatchingLoss, SwappedBranchIsZero) {
  auto a = torch::randn({2, 3, 4, 4}, torch::kFloat64), ac = torch::randn({2, 3, 4, 4}, torch::kFloat64);
  auto d = torch::tensor({{1.0, -1.0, 1.0}, {-1.0, -1.0, 1.0}}, torch::kFloat64);
  EXPECT_EQ(loss_complementary_matching(a, ac, ac, a, d).item<double>(), 0.0);
}

TEST(MatchingLoss, MatchesBruteForceOnTwoByTwoFixtures) {
  torch::manual_seed(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto ax = torch::randn({2, 2, 2, 2}, torch::kFloat64), acx = torch::randn({2, 2, 2, 2}, torch::kFloat64);
    auto ay = torch::randn({2, 2, 2, 2}, torch::kFloat64), acy = torch::randn({2, 2, 2, 2}, torch::kFloat64);
    for (auto d : {torch::zeros({2, 2}, torch::kFloat64), torch::tensor({{1.0, -1.0}, {-1.0, 1.0}}, torch::kFloat64),
                   torch::tensor({{0.0, 1.0}, {-1.0, 0.0}}, torch::kFloat64)}) {
      EXPECT_NEAR(loss_complementary_matching(ax, acx, ay, acy, d).item<double>(),
                  brute_force_matching(ax, acx, ay, acy, d), 1e-6);
    }
  }
}

TEST(MatchingLoss, SwapConsistencyExact) {
  torch::manual_seed(12);
  for (int trial = 0; trial < 30; ++trial) {
    auto ax = torch::randn({2, 2, 2, 2}, torch::kFloat64), acx = torch::randn({2, 2, 2, 2}, torch::kFloat64);
    auto ay = torch::randn({2, 2, 2, 2}, torch::kFloat64), acy = torch::randn({2, 2, 2, 2}, torch::kFloat64);
    auto d = torch::randint(-1, 2, {2, 2}, torch::kFloat64);
    const std::int64_t n = trial % 2, i = (trial / 2) % 2;
    auto flipped = d.clone();
    flipped[n][i] = d[n][i].item<double>() == 0.0 ? 1.0 : 0.0;
    auto ay2 = ay.clone(), acy2 = acy.clone();
    ay2[n][i].copy_(acy[n][i]);
    acy2[n][i].copy_(ay[n][i]);
    EXPECT_EQ(loss_complementary_matching(ax, acx, ay, acy, flipped).item<double>(),
              loss_complementary_matching(ax, acx, ay2, acy2, d).item<double>());
  }
}

TEST(MatchingLoss, ShapeMismatchRaises) {
  auto a = torch::randn({1, 2, 2, 2});
  EXPECT_THROW(loss_complementary_matching(a, a, torch::randn({1, 2, 3, 3}), a, torch::zeros({1, 2})), ShapeError);
}

TEST(ReconstructionLoss, Fixtures) {
  auto x = torch::randn({2, 3, 4, 4}, torch::kFloat64);
  EXPECT_EQ(loss_reconstruction(x, x).item<double>(), 0.0);
  EXPECT_DOUBLE_EQ(loss_reconstruction(torch::zeros({2, 3}), torch::full({2, 3}, 0.5)).item<double>(), 0.5);
  auto y = torch::randn({2, 3, 4, 4}, torch::kFloat64);
  double s = 0;
  auto xa = x.flatten(), ya = y.flatten();
  for (std::int64_t i = 0; i < xa.numel(); ++i) s += std::abs(xa[i].item<double>() - ya[i].item<double>());
  EXPECT_NEAR(loss_reconstruction(x, y).item<double>(), s / static_cast<double>(xa.numel()), 1e-12);
}

TEST(TotalLoss, DiscriminatorFixture) {
  DiscriminatorLossParts p{torch::tensor(-4.0), torch::tensor(0.6), torch::tensor(0.4), torch::tensor(2.0)};
  LossWeights w;
  EXPECT_DOUBLE_EQ(total_loss_d(p, w).item<double>(), 7.0);
  DiscriminatorLossParts zero{torch::tensor(0.0), torch::tensor(0.0), torch::tensor(0.0), torch::tensor(0.0)};
  EXPECT_EQ(total_loss_d(zero, w).item<double>(), 0.0);
}

TEST(TotalLoss, GeneratorFixture) {
  GeneratorLossParts p{torch::tensor(-2.0, torch::kFloat64), torch::tensor(0.1, torch::kFloat64),
                       torch::tensor(0.3, torch::kFloat64), torch::tensor(0.01, torch::kFloat64)};
  EXPECT_NEAR(total_loss_g(p, LossWeights{}).item<double>(), 2.1, 1e-12);
  GeneratorLossParts zero{torch::tensor(0.0), torch::tensor(0.0), torch::tensor(0.0), torch::tensor(0.0)};
  EXPECT_EQ(total_loss_g(zero, LossWeights{}).item<double>(), 0.0);
}

TEST(TotalLoss, AffineInEachWeight) {
  GeneratorLossParts g{torch::tensor(-1.3, torch::kFloat64), torch::tensor(0.7, torch::kFloat64),
                       torch::tensor(0.2, torch::kFloat64), torch::tensor(0.05, torch::kFloat64)};
  LossWeights base;
  const double t0 = total_loss_g(g, base).item<double>();
  auto w = base;
  w.matching += 1;
  EXPECT_NEAR(total_loss_g(g, w).item<double>() - t0, 0.7, 1e-12);
  w = base;
  w.g_classification += 1;
  EXPECT_NEAR(total_loss_g(g, w).item<double>() - t0, 0.2, 1e-12);
  w = base;
  w.reconstruction += 1;
  EXPECT_NEAR(total_loss_g(g, w).item<double>() - t0, 0.05, 1e-12);

  DiscriminatorLossParts d{torch::tensor(1.5, torch::kFloat64), torch::tensor(0.3, torch::kFloat64),
                           torch::tensor(0.2, torch::kFloat64), torch::tensor(0.9, torch::kFloat64)};
  const double d0 = total_loss_d(d, base).item<double>();
  w = base;
  w.attention += 1;
  EXPECT_NEAR(total_loss_d(d, w).item<double>() - d0, 0.5, 1e-12);
  w = base;
  w.d_classification += 1;
  EXPECT_NEAR(total_loss_d(d, w).item<double>() - d0, 0.9, 1e-12);
}

TEST(TotalLoss, ZeroMatchingWeightDropsTerm) {
  GeneratorLossParts g{torch::tensor(-1.0), torch::tensor(123.0), torch::tensor(0.2), torch::tensor(0.01)};
  LossWeights w;
  w.matching = 0;
  GeneratorLossParts without = g;
  without.matching = torch::tensor(0.0);
  EXPECT_EQ(total_loss_g(g, w).item<double>(), total_loss_g(without, w).item<double>());
}

TEST(LossWeights, RejectsNegative) {
  LossWeights w;
  w.reconstruction = -1;
  EXPECT_THROW(w.validate(), ConfigError);
}

TEST(Complement, FixturesAndErrors) {
  AttributeNames names{"a", "b", "c"};
  EXPECT_EQ(complement_vector(AttributeVector({1, 0, 1}, names)).values(), (std::vector<std::uint8_t>{0, 1, 0}));
  EXPECT_EQ(complement_vector(AttributeVector({1, 1, 1}, names)).values(), (std::vector<std::uint8_t>{0, 0, 0}));
  EXPECT_THROW(complement_tensor(f64({0.0, 0.5})), DomainError);
}

TEST(Complement, InvolutionExhaustiveOverEightBits) {
  AttributeNames names;
  for (int i = 0; i < 8; ++i) names.push_back("a" + std::to_string(i));
  for (int m = 0; m < 256; ++m) {
    std::vector<std::uint8_t> bits(8);
    for (int i = 0; i < 8; ++i) bits[i] = (m >> i) & 1;
    AttributeVector v(bits, names);
    auto c = complement_vector(v);
    for (int i = 0; i < 8; ++i) ASSERT_EQ(c[i], 1 - bits[i]);
    ASSERT_EQ(complement_vector(c), v);
  }
}

// Gradient suite: every differentiable loss against central differences.
class GradientSuite : public ::testing::Test {
 protected:
  void SetUp() override { torch::manual_seed(5); }
  static constexpr double kTol = 1e-4;
};

TEST_F(GradientSuite, AttentionAb) {
  auto v = rand_bits({2, 3});
  EXPECT_LE(gradient_error([&](const torch::Tensor& p) { return loss_attention_ab(p, v); }, rand_prob({2, 3})), kTol);
}

TEST_F(GradientSuite, AttentionCab) {
  auto v = rand_bits({2, 3});
  EXPECT_LE(gradient_error([&](const torch::Tensor& p) { return loss_attention_cab(p, v); }, rand_prob({2, 3})),
            kTol);
}

TEST_F(GradientSuite, ClassificationD) {
  auto v = rand_bits({2, 3});
  auto p2 = rand_prob({2, 3});
  EXPECT_LE(gradient_error([&](const torch::Tensor& p) { return loss_cls_d(p, p2, v); }, rand_prob({2, 3})), kTol);
}

TEST_F(GradientSuite, ClassificationG) {
  auto v = rand_bits({2, 3});
  auto p1 = rand_prob({2, 3});
  EXPECT_LE(gradient_error([&](const torch::Tensor& p) { return loss_cls_g(p1, p, v); }, rand_prob({2, 3})), kTol);
}

TEST_F(GradientSuite, GradientPenaltyWrtCriticParameters) {
  auto real = torch::randn({3, 4}, torch::kFloat64), fake = torch::randn({3, 4}, torch::kFloat64);
  auto alpha = torch::rand({3}, torch::kFloat64);
  auto f = [&](const torch::Tensor& w) {
    Critic critic = [&w](const torch::Tensor& z) { return torch::tanh(z.matmul(w)).sum(1); };
    return gradient_penalty_at(critic, real, fake, alpha);
  };
  EXPECT_LE(gradient_error(f, torch::randn({4, 2}, torch::kFloat64)), kTol);
}

TEST_F(GradientSuite, GradientPenaltyWrtFakeBatch) {
  auto real = torch::randn({3, 4}, torch::kFloat64);
  auto alpha = torch::rand({3}, torch::kFloat64);
  auto w = torch::randn({4, 2}, torch::kFloat64);
  Critic critic = [&w](const torch::Tensor& z) { return torch::tanh(z.matmul(w)).sum(1); };
  EXPECT_LE(gradient_error([&](const torch::Tensor& y) { return gradient_penalty_at(critic, real, y, alpha); },
                           torch::randn({3, 4}, torch::kFloat64)),
            kTol);
}

TEST_F(GradientSuite, AdversarialD) {
  auto fake = torch::randn({4}, torch::kFloat64);
  auto gp = torch::tensor(0.2, torch::kFloat64);
  EXPECT_LE(gradient_error([&](const torch::Tensor& r) { return loss_adv_d(r, fake, gp, 10); },
                           torch::randn({4}, torch::kFloat64)),
            kTol);
}

TEST_F(GradientSuite, AdversarialG) {
  auto x = torch::randn({5}, torch::kFloat64);
  EXPECT_LE(gradient_error([](const torch::Tensor& s) { return loss_adv_g(s); }, x), kTol);
  auto s = x.clone().requires_grad_(true);
  auto g = torch::autograd::grad({loss_adv_g(s)}, {s})[0];
  EXPECT_TRUE(torch::allclose(g, torch::full({5}, 0.2, torch::kFloat64)));
}

TEST_F(GradientSuite, ComplementaryMatching) {
  // Offsets keep every |difference| well away from the kink at zero.
  auto ax = torch::randn({2, 2, 2, 2}, torch::kFloat64), acx = torch::randn({2, 2, 2, 2}, torch::kFloat64);
  auto acy = ax + 0.5 + torch::rand({2, 2, 2, 2}, torch::kFloat64);
  auto d = torch::tensor({{0.0, 1.0}, {-1.0, 0.0}}, torch::kFloat64);
  EXPECT_LE(gradient_error([&](const torch::Tensor& ay) { return loss_complementary_matching(ax, acx, ay, acy, d); },
                           acx + 0.5 + torch::rand({2, 2, 2, 2}, torch::kFloat64)),
            kTol);
}

TEST_F(GradientSuite, Reconstruction) {
  auto x = torch::randn({2, 3, 2, 2}, torch::kFloat64);
  EXPECT_LE(gradient_error([&](const torch::Tensor& r) { return loss_reconstruction(x, r); },
                           x + 0.3 + torch::rand({2, 3, 2, 2}, torch::kFloat64)),
            kTol);
}
