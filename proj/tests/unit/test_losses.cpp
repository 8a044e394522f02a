#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "ggdr/errors.hpp"
#include "ggdr/losses.hpp"
#include "test_support.hpp"

using namespace ggdr;
using ggdr::testing::cosine_distance_oracle;
using ggdr::testing::finite_difference;
using ggdr::testing::relative_error;
using ggdr::testing::tiny_net;

namespace {

const auto kF64 = torch::TensorOptions().dtype(torch::kFloat64);

double softplus_ref(double x) { return std::log1p(std::exp(x)); }

torch::Tensor full(std::vector<std::int64_t> shape, double v) { return torch::full(shape, v, kF64); }

}  // namespace

TEST(AdvLossD, ZeroLogitsGiveTwoLog2) {
  const auto l = adv_loss_d(full({4}, 0.0), full({4}, 0.0)).item<double>();
  EXPECT_NEAR(l, 2.0 * std::log(2.0), 1e-6);
  EXPECT_NEAR(l, 1.386294, 1e-6);
}

TEST(AdvLossD, PerfectDiscriminatorLimit) {
  EXPECT_NEAR(adv_loss_d(full({3}, 1e4), full({3}, -1e4)).item<double>(), 0.0, 1e-6);
}

TEST(AdvLossD, UnitLogitsMatchScalarSoftplus) {
  const auto l = adv_loss_d(full({2}, 1.0), full({2}, -1.0)).item<double>();
  EXPECT_NEAR(l, 2.0 * softplus_ref(-1.0), 1e-6);
  EXPECT_NEAR(l, 0.626523, 1e-6);
}

TEST(AdvLossD, EmptyBatchIsInputError) {
  EXPECT_THROW(adv_loss_d(torch::empty({0}, kF64), full({2}, 0.0)), InputError);
  EXPECT_THROW(adv_loss_d(full({2}, 0.0), torch::empty({0}, kF64)), InputError);
}

TEST(AdvLossG, Examples) {
  EXPECT_NEAR(adv_loss_g(full({5}, 0.0)).item<double>(), std::log(2.0), 1e-6);
  EXPECT_NEAR(adv_loss_g(full({5}, 1e4)).item<double>(), 0.0, 1e-6);
  EXPECT_NEAR(adv_loss_g(full({5}, -2.0)).item<double>(), softplus_ref(2.0), 1e-6);
  EXPECT_NEAR(adv_loss_g(full({5}, -2.0)).item<double>(), 2.126928, 1e-6);
  EXPECT_THROW(adv_loss_g(torch::empty({0}, kF64)), InputError);
}

TEST(CosineDistance, IdenticalMapsGiveZero) {
  const auto a = torch::randn({2, 5, 3, 3}, kF64);
  EXPECT_NEAR(cosine_distance(a, a).item<double>(), 0.0, 1e-6);
}

TEST(CosineDistance, OppositeMapsGiveTwo) {
  const auto a = torch::randn({2, 5, 3, 3}, kF64);
  EXPECT_NEAR(cosine_distance(-a, a).item<double>(), 2.0, 1e-6);
}

TEST(CosineDistance, ScaledMapGivesZero) {
  const auto a = torch::randn({2, 5, 3, 3}, kF64);
  EXPECT_NEAR(cosine_distance(2.0 * a, a).item<double>(), 0.0, 1e-6);
}

TEST(CosineDistance, OrthogonalChannelsGiveOne) {
  auto p = torch::zeros({2, 2, 4, 4}, kF64);
  auto t = torch::zeros({2, 2, 4, 4}, kF64);
  p.select(1, 0).fill_(1.0);
  t.select(1, 1).fill_(1.0);
  EXPECT_NEAR(cosine_distance(p, t).item<double>(), 1.0, 1e-6);
}

TEST(CosineDistance, ZeroVectorIsNeutralAndFinite) {
  const auto p = torch::zeros({1, 3, 2, 2}, kF64).requires_grad_(true);
  const auto t = torch::randn({1, 3, 2, 2}, kF64);
  const auto d = cosine_distance(p, t);
  EXPECT_NEAR(d.item<double>(), 1.0, 1e-12);
  d.backward();
  EXPECT_TRUE(torch::isfinite(p.grad()).all().item<bool>());
}

TEST(CosineDistance, MatchesDoubleLoopOracle) {
  torch::manual_seed(3);
  const auto p = torch::randn({2, 6, 8, 8}, kF64);
  const auto t = torch::randn({2, 6, 8, 8}, kF64);
  EXPECT_NEAR(cosine_distance(p, t).item<double>(), cosine_distance_oracle(p, t), 1e-6);
}

TEST(CosineDistance, ShapeMismatchIsInputError) {
  EXPECT_THROW(cosine_distance(torch::zeros({1, 2, 4, 4}), torch::zeros({1, 3, 4, 4})), InputError);
}

TEST(CosineDistance, RangeAndScaleInvarianceProperty) {
  torch::manual_seed(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = torch::randn({2, 4, 3, 3}, kF64);
    const auto t = torch::randn({2, 4, 3, 3}, kF64);
    const double d = cosine_distance(p, t).item<double>();
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 2.0);
    const double a = std::exp(torch::randn({1}, kF64).item<double>() * 2.0);
    const double b = std::exp(torch::randn({1}, kF64).item<double>() * 2.0);
    EXPECT_NEAR(cosine_distance(a * p, b * t).item<double>(), d, 1e-6);
  }
}

TEST(CosineDistance, TargetReceivesNoGradient) {
  const auto p = torch::randn({1, 3, 2, 2}, kF64).requires_grad_(true);
  const auto t = torch::randn({1, 3, 2, 2}, kF64).requires_grad_(true);
  cosine_distance(p, t).backward();
  EXPECT_TRUE(p.grad().defined());
  EXPECT_FALSE(t.grad().defined());
}

TEST(GgdrLoss, EqualMapsGiveZeroAndMissingResolutionIsConfigError) {
  DiscriminatorOutput d;
  GeneratorOutput g;
  const auto m = torch::randn({2, 4, 8, 8});
  d.decoder_maps[8] = m;
  g.pyramid[8] = m;
  EXPECT_NEAR(ggdr_loss(d, g, 8).item<double>(), 0.0, 1e-6);
  EXPECT_THROW(ggdr_loss(d, g, 4), ConfigError);
  g.pyramid.erase(8);
  EXPECT_THROW(ggdr_loss(d, g, 8), ConfigError);
}

TEST(GgdrLoss, RandomMapsMatchOracle) {
  torch::manual_seed(5);
  DiscriminatorOutput d;
  GeneratorOutput g;
  d.decoder_maps[8] = torch::randn({2, 16, 8, 8}, kF64);
  g.pyramid[8] = torch::randn({2, 16, 8, 8}, kF64);
  EXPECT_NEAR(ggdr_loss(d, g, 8).item<double>(),
              cosine_distance_oracle(d.decoder_maps[8], g.pyramid[8]), 1e-6);
}

TEST(GgdrLoss, GeneratorGradientIsExactlyZero) {
  auto cfg = tiny_net();
  auto gen = build_generator(cfg, 1);
  auto disc = build_discriminator(cfg, 2);
  const auto g_out = gen->forward(torch::randn({3, cfg.z_dim}));
  ASSERT_TRUE(g_out.pyramid.at(cfg.guidance()).requires_grad());
  const auto d_out = disc->forward(g_out.image.detach());
  const auto loss = ggdr_loss(d_out, g_out, cfg.guidance());
  ASSERT_TRUE(loss.requires_grad());
  const auto grads = torch::autograd::grad({loss}, gen->parameters(), {}, false, false,
                                           /*allow_unused=*/true);
  for (const auto& g : grads) {
    if (g.defined()) EXPECT_TRUE(g.eq(0).all().item<bool>());
  }
}

TEST(R1Penalty, LinearLogitGivesSquaredNorm) {
  const auto w = torch::tensor({3.0, 4.0}, kF64);
  const auto x = torch::randn({5, 2}, kF64);
  const auto r1 = r1_penalty([&](const torch::Tensor& in) { return in.matmul(w); }, x, 2.0);
  EXPECT_NEAR(r1.item<double>(), 25.0, 1e-6);
}

TEST(R1Penalty, ConstantLogitGivesZero) {
  const auto x = torch::randn({3, 2}, kF64);
  const auto r1 = r1_penalty(
      [](const torch::Tensor& in) { return torch::ones({in.size(0)}, in.options()); }, x, 1.0);
  EXPECT_NEAR(r1.item<double>(), 0.0, 1e-12);
  const auto r1_dep = r1_penalty([](const torch::Tensor& in) { return in.sum(1) * 0.0 + 1.0; }, x, 1.0);
  EXPECT_NEAR(r1_dep.item<double>(), 0.0, 1e-12);
}

TEST(R1Penalty, NegativeGammaIsConfigError) {
  const auto x = torch::randn({3, 2}, kF64);
  EXPECT_THROW(r1_penalty([](const torch::Tensor& in) { return in.sum(1); }, x, -1.0), ConfigError);
}

TEST(AuxSegmentationLoss, Examples) {
  auto labels = torch::randint(0, 5, {2, 3, 3}, torch::kInt64);
  const auto onehot = torch::one_hot(labels, 5).permute({0, 3, 1, 2}).to(torch::kFloat64) * 100.0;
  EXPECT_NEAR(aux_segmentation_loss(onehot, labels).item<double>(), 0.0, 1e-6);
  EXPECT_NEAR(aux_segmentation_loss(torch::zeros({2, 5, 3, 3}, kF64), labels).item<double>(),
              std::log(5.0), 1e-6);
}

TEST(AuxSegmentationLoss, MatchesHandComputedCrossEntropy) {
  torch::manual_seed(9);
  const auto logits = torch::randn({1, 3, 2, 2}, kF64);
  const auto labels = torch::tensor({0, 2, 1, 2}, torch::kInt64).reshape({1, 2, 2});
  double total = 0.0;
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) {
      double lse = 0.0;
      for (int c = 0; c < 3; ++c) lse += std::exp(logits[0][c][y][x].item<double>());
      const auto k = labels[0][y][x].item<std::int64_t>();
      total += std::log(lse) - logits[0][k][y][x].item<double>();
    }
  EXPECT_NEAR(aux_segmentation_loss(logits, labels).item<double>(), total / 4.0, 1e-6);
}

TEST(AuxSegmentationLoss, LabelOutOfRangeIsInputError) {
  const auto logits = torch::zeros({1, 3, 2, 2}, kF64);
  EXPECT_THROW(aux_segmentation_loss(logits, torch::full({1, 2, 2}, 3, torch::kInt64)), InputError);
  EXPECT_THROW(aux_segmentation_loss(logits, torch::full({1, 2, 2}, -1, torch::kInt64)), InputError);
}

TEST(TotalDLoss, Examples) {
  EXPECT_NEAR(total_d_loss(1.0, 0.1, 10.0, 0.0), 2.0, 1e-12);
  EXPECT_NEAR(total_d_loss(0.7, 0.0, 10.0, 0.0), 0.7, 1e-12);
  EXPECT_NEAR(total_d_loss(1.386, 2.0, 10.0, 0.5), 21.886, 1e-9);
  EXPECT_EQ(total_d_loss(1.25, 0.3, 0.0, 0.0), 1.25);
}

// Gradient checks against central finite differences at float64 on a
// discriminator / generator pair with fewer than 1000 parameters.
class LossGradients : public ::testing::Test {
 protected:
  void SetUp() override {
    cfg_ = tiny_net();
    cfg_.seg_classes = 3;
    gen_ = build_generator(cfg_, 21);
    disc_ = build_discriminator(cfg_, 22);
    gen_->to(torch::kFloat64);
    disc_->to(torch::kFloat64);
    torch::manual_seed(23);
    real_ = torch::rand({2, 3, 8, 8}, kF64) * 2.0 - 1.0;
    z_ = torch::randn({2, cfg_.z_dim}, kF64);
    labels_ = torch::randint(0, 3, {2, 8, 8}, torch::kInt64);
  }

  void check(const std::function<torch::Tensor()>& loss_fn, const std::vector<torch::Tensor>& params) {
    ASSERT_LT(count_params(*disc_), 1000);
    ASSERT_LT(count_params(*gen_), 1000);
    const auto loss = loss_fn();
    auto analytic = torch::autograd::grad({loss}, params, {}, false, false, true);
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      if (!analytic[i].defined()) analytic[i] = torch::zeros_like(params[i]);
    }
    const auto numeric = finite_difference([&] { return loss_fn().item<double>(); }, params);
    const double err = relative_error(analytic, numeric);
    EXPECT_LT(err, 1e-4);
    EXPECT_GT(ggdr::testing::flatten_all(analytic).norm().item<double>(), 0.0);
  }

  NetConfig cfg_;
  Generator gen_{nullptr};
  Discriminator disc_{nullptr};
  torch::Tensor real_, z_, labels_;
};

TEST_F(LossGradients, AdvLossDWrtDiscriminator) {
  torch::Tensor fake;
  {
    torch::NoGradGuard ng;
    fake = gen_->forward(z_).image;
  }
  check([&] {
    return adv_loss_d(disc_->forward(real_, {.decoder = false}).logit,
                      disc_->forward(fake, {.decoder = false}).logit);
  }, disc_->parameters());
}

TEST_F(LossGradients, AdvLossGWrtGenerator) {
  check([&] { return adv_loss_g(disc_->forward(gen_->forward(z_).image, {.decoder = false}).logit); },
        gen_->parameters());
}

TEST_F(LossGradients, CosineDistanceWrtDiscriminator) {
  GeneratorOutput fake;
  {
    torch::NoGradGuard ng;
    fake = gen_->forward(z_);
  }
  check([&] { return ggdr_loss(disc_->forward(fake.image), fake, cfg_.guidance()); },
        disc_->parameters());
}

TEST_F(LossGradients, R1PenaltyWrtDiscriminator) {
  check([&] { return r1_penalty(disc_, real_, 1.0); }, disc_->parameters());
}

TEST_F(LossGradients, AuxSegmentationWrtDiscriminator) {
  check([&] {
    const auto out = disc_->forward(real_, {.decoder = false, .segmentation = true});
    return aux_segmentation_loss(out.seg_logits, labels_);
  }, disc_->parameters());
}

TEST_F(LossGradients, R1InputGradientMatchesFiniteDifferences) {
  // The inner gradient |d logit / dx|^2 itself, checked against differences of
  // the logit with respect to the input pixels.
  auto x = real_.narrow(0, 0, 1).clone();
  const auto logit_fn = [&] { return disc_->forward(x, {.decoder = false}).logit.sum().item<double>(); };
  const auto numeric = finite_difference(logit_fn, {x})[0];
  const double expected = 0.5 * numeric.square().sum().item<double>();
  const double got = r1_penalty(disc_, x, 1.0).item<double>();
  EXPECT_NEAR(got, expected, 1e-4 * std::max(1.0, std::abs(expected)));
}
