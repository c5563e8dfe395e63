#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ken/emotion.hpp"
#include "ken/nn.hpp"
#include "ken/ops.hpp"
#include "ken/params.hpp"
#include "ken/rng.hpp"
#include "ken/tape.hpp"
#include "ken/tensor.hpp"
#include "support/gradcheck.hpp"
#include "support/model_oracles.hpp"

using ken::FeedForward;
using ken::ModelParams;
using ken::Tensor;

namespace {

Tensor random_tensor(ken::Shape shape, ken::RngStream& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (int i = 0; i < static_cast<int>(t.size()); ++i) t.at(i) = rng.normal(0.0, scale);
  return t;
}

std::vector<double> to_vec(const Tensor& t) {
  return {t.data().begin(), t.data().end()};
}

std::vector<std::vector<double>> to_rows(const Tensor& m) {
  std::vector<std::vector<double>> rows;
  for (int r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (int c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m.at(r, c);
    rows.push_back(std::move(row));
  }
  return rows;
}

oracle::Ffn to_oracle(const FeedForward& f) {
  oracle::Ffn o;
  o.in = f.w1.rows();
  o.hidden = f.w1.cols();
  o.out = f.w2.cols();
  o.w1 = to_vec(f.w1);
  o.b1 = to_vec(f.b1);
  o.w2 = to_vec(f.w2);
  o.b2 = to_vec(f.b2);
  return o;
}

oracle::LstmCell to_oracle(const ken::LstmCellParams& c) {
  oracle::LstmCell o;
  o.in = c.wx.rows();
  o.hidden = c.hidden;
  o.wx = to_vec(c.wx);
  o.wh = to_vec(c.wh);
  o.b = to_vec(c.b);
  return o;
}

oracle::EmotionExpert to_oracle(const ken::EmotionExpertParams& p) {
  oracle::EmotionExpert o;
  o.fwd = to_oracle(p.fwd);
  o.bwd = to_oracle(p.bwd);
  o.attn_heads = p.attn_heads;
  o.wq = to_vec(p.wq);
  o.wk = to_vec(p.wk);
  o.wv = to_vec(p.wv);
  o.wo = to_vec(p.wo);
  o.sigma = to_oracle(p.sigma);
  return o;
}

ken::EmotionExpertParams make_expert(ModelParams& params, const std::string& prefix, int d,
                                     int d_e, int d_e_out, std::uint64_t seed) {
  ken::RngStream rng = ken::named_stream(seed, "init." + prefix);
  return ken::EmotionExpertParams::create(params, prefix, d, d_e, d_e_out, 1, rng);
}

void expect_close(const std::vector<double>& got, const std::vector<double>& want, double tol) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_NEAR(got[i], want[i], tol) << "component " << i;
  }
}

void copy_values(Tensor& dst, const Tensor& src) {
  for (int i = 0; i < static_cast<int>(src.size()); ++i) dst.at(i) = src.at(i);
}

}  // namespace

// ---------------------------------------------------------------------------
// emotion_expert

TEST(EmotionExpert, SingleStepMirroredCellsAgree) {
  ModelParams params;
  auto p = make_expert(params, "x", 3, 2, 2, 5);
  // With identical cell weights, the backward pass over one step is the
  // forward pass.
  copy_values(p.bwd.wx, p.fwd.wx);
  copy_values(p.bwd.wh, p.fwd.wh);
  copy_values(p.bwd.b, p.fwd.b);
  ken::RngStream rng(2);
  Tensor seq = random_tensor({1, 3}, rng);
  Tensor states = ken::bilstm(seq, p.fwd, p.bwd);
  ASSERT_EQ(states.rows(), 1);
  ASSERT_EQ(states.cols(), 4);
  EXPECT_EQ(states.at(0, 0), states.at(0, 2));
  EXPECT_EQ(states.at(0, 1), states.at(0, 3));

  std::vector<Tensor> attn;
  ken::emotion_expert(seq, p, {}, &attn);
  ASSERT_EQ(attn.size(), 1u);
  EXPECT_EQ(attn[0].rows(), 1);
  EXPECT_EQ(attn[0].cols(), 1);
  EXPECT_DOUBLE_EQ(attn[0].at(0), 1.0);
}

TEST(EmotionExpert, ZeroSequenceZeroBiasGivesExactZero) {
  ModelParams params;
  auto p = make_expert(params, "x", 3, 2, 2, 7);  // biases initialize to zero
  Tensor seq = Tensor::zeros({3, 3});
  Tensor out = ken::emotion_expert(seq, p);
  ASSERT_EQ(out.dim(0), 2);
  for (int i = 0; i < out.size(); ++i) EXPECT_EQ(out.at(i), 0.0);
}

TEST(EmotionExpert, MatchesHandUnrolledOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ModelParams params;
    auto p = make_expert(params, "x", 2, 2, 3, 500 + seed);
    ken::RngStream rng(seed);
    Tensor seq = random_tensor({3, 2}, rng);
    Tensor got = ken::emotion_expert(seq, p);
    std::vector<double> want = oracle::emotion_expert(to_oracle(p), to_rows(seq));
    expect_close(to_vec(got), want, 1e-10);
  }
}

TEST(EmotionExpert, AttentionRowsSumToOne) {
  ModelParams params;
  auto p = make_expert(params, "x", 3, 2, 2, 9);
  ken::RngStream rng(11);
  Tensor seq = random_tensor({4, 3}, rng, 2.0);
  std::vector<Tensor> attn;
  ken::emotion_expert(seq, p, {}, &attn);
  ASSERT_EQ(attn.size(), 1u);
  for (int r = 0; r < attn[0].rows(); ++r) {
    double s = 0.0;
    for (int c = 0; c < attn[0].cols(); ++c) s += attn[0].at(r, c);
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

// ---------------------------------------------------------------------------
// aggregate_experts

TEST(AggregateExperts, IdenticalInputsPassThrough) {
  ken::RngStream rng(13);
  Tensor v = random_tensor({4}, rng);
  Tensor out = ken::aggregate_experts({v, v, v});
  expect_close(to_vec(out), to_vec(v), 1e-15);
}

TEST(AggregateExperts, PermutationInvariant) {
  ken::RngStream rng(17);
  Tensor a = random_tensor({4}, rng), b = random_tensor({4}, rng), c = random_tensor({4}, rng);
  EXPECT_EQ(to_vec(ken::aggregate_experts({a, b, c})), to_vec(ken::aggregate_experts({c, a, b})));
}

TEST(AggregateExperts, MatchesElementwiseMean) {
  ken::RngStream rng(19);
  std::vector<Tensor> outs = {random_tensor({3}, rng), random_tensor({3}, rng),
                              random_tensor({3}, rng)};
  Tensor got = ken::aggregate_experts(outs);
  std::vector<double> want =
      oracle::aggregate_mean({to_vec(outs[0]), to_vec(outs[1]), to_vec(outs[2])});
  expect_close(to_vec(got), want, 1e-15);
}

TEST(AggregateExperts, EmptyListThrows) {
  EXPECT_THROW(ken::aggregate_experts({}), ken::ConfigError);
}

// ---------------------------------------------------------------------------
// combine_emotions

TEST(CombineEmotions, GammaOneIgnoresImageSideBitExactly) {
  ModelParams params;
  ken::RngStream init = ken::named_stream(3, "init.sigma");
  FeedForward sigma_e = FeedForward::create(params, "sigma", 6, 6, 3, init);
  ken::RngStream rng(23);
  Tensor e_t = random_tensor({3}, rng);
  Tensor ev_a = random_tensor({3}, rng);
  Tensor ev_b = random_tensor({3}, rng, 50.0);
  Tensor out_a = ken::combine_emotions(e_t, ev_a, 1.0, sigma_e);
  Tensor out_b = ken::combine_emotions(e_t, ev_b, 1.0, sigma_e);
  EXPECT_EQ(to_vec(out_a), to_vec(out_b));
}

TEST(CombineEmotions, GammaZeroIgnoresTextSideBitExactly) {
  ModelParams params;
  ken::RngStream init = ken::named_stream(4, "init.sigma");
  FeedForward sigma_e = FeedForward::create(params, "sigma", 6, 6, 3, init);
  ken::RngStream rng(29);
  Tensor e_v = random_tensor({3}, rng);
  Tensor et_a = random_tensor({3}, rng);
  Tensor et_b = random_tensor({3}, rng, 50.0);
  EXPECT_EQ(to_vec(ken::combine_emotions(et_a, e_v, 0.0, sigma_e)),
            to_vec(ken::combine_emotions(et_b, e_v, 0.0, sigma_e)));
}

TEST(CombineEmotions, MatchesOracleAtDefaultGamma) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ModelParams params;
    ken::RngStream init = ken::named_stream(600 + seed, "init.sigma");
    FeedForward sigma_e = FeedForward::create(params, "sigma", 6, 6, 3, init);
    ken::RngStream rng(seed);
    Tensor e_t = random_tensor({3}, rng);
    Tensor e_v = random_tensor({3}, rng);
    Tensor got = ken::combine_emotions(e_t, e_v, 0.7, sigma_e);
    std::vector<double> want =
        oracle::combine_emotions(to_vec(e_t), to_vec(e_v), 0.7, to_oracle(sigma_e));
    expect_close(to_vec(got), want, 1e-10);
  }
}

TEST(CombineEmotions, GammaOutOfRangeThrows) {
  ModelParams params;
  ken::RngStream init = ken::named_stream(5, "init.sigma");
  FeedForward sigma_e = FeedForward::create(params, "sigma", 6, 6, 3, init);
  Tensor e = Tensor::ones({3});
  EXPECT_THROW(ken::combine_emotions(e, e, -0.1, sigma_e), ken::ConfigError);
  EXPECT_THROW(ken::combine_emotions(e, e, 1.1, sigma_e), ken::ConfigError);
}

// ---------------------------------------------------------------------------
// emotion_reasoning_loss

TEST(ReasoningLoss, UniformPredictionCostsLnTwo) {
  ken::RngStream rng(31);
  Tensor m_e = Tensor::zeros({3});
  Tensor w_e = random_tensor({3, 2}, rng);
  Tensor b_e = Tensor::zeros({2});
  auto [probs, loss] = ken::emotion_reasoning_loss(m_e, 1, w_e, b_e);
  EXPECT_NEAR(loss.value(), std::log(2.0), 1e-9);
  EXPECT_NEAR(probs.at(0) + probs.at(1), 1.0, 1e-9);
  EXPECT_NEAR(probs.at(0), 0.5, 1e-12);
}

TEST(ReasoningLoss, SaturatedCorrectPredictionNearZero) {
  Tensor m_e({1}, {1.0});
  Tensor w_e({1, 2}, {20.0, -20.0});
  Tensor b_e = Tensor::zeros({2});
  auto [probs, loss] = ken::emotion_reasoning_loss(m_e, 0, w_e, b_e);
  EXPECT_LT(loss.value(), 1e-6);
  EXPECT_GT(probs.at(0), 0.999);
}

TEST(ReasoningLoss, BatchMeanOfSingles) {
  ken::RngStream rng(37);
  Tensor m1 = random_tensor({3}, rng), m2 = random_tensor({3}, rng);
  Tensor w_e = random_tensor({3, 2}, rng);
  Tensor b_e = random_tensor({2}, rng);
  auto [p1, l1] = ken::emotion_reasoning_loss(m1, 0, w_e, b_e);
  auto [p2, l2] = ken::emotion_reasoning_loss(m2, 1, w_e, b_e);
  Tensor batch_logits = ken::stack_rows(
      {ken::add(ken::matmul(m1, w_e), b_e), ken::add(ken::matmul(m2, w_e), b_e)});
  Tensor batch_loss = ken::cross_entropy(batch_logits, {0, 1});
  EXPECT_NEAR(batch_loss.value(), 0.5 * (l1.value() + l2.value()), 1e-12);
}

// ---------------------------------------------------------------------------
// Full module

TEST(EmotionModule, ForwardShapesAndTraceSites) {
  ken::EmotionConfig cfg;
  cfg.d = 3;
  cfg.d_e = 2;
  cfg.d_e_out = 2;
  cfg.experts = 2;
  cfg.gamma = 0.7;
  ModelParams params;
  auto p = ken::EmotionParams::create(params, cfg, 99);
  ken::RngStream rng(41);
  Tensor T = random_tensor({3, 3}, rng);
  Tensor V = random_tensor({2, 3}, rng);

  ken::Tape tape;
  tape.record_all = true;
  ken::TapeGuard guard(tape);
  auto out = ken::emotion_forward(p, T, V);
  EXPECT_EQ(out.m_e.dim(0), 2);
  EXPECT_EQ(out.logits.dim(0), 2);

  bool saw_text1 = false, saw_image0 = false, saw_combine = false;
  for (const auto& e : tape.trace()) {
    if (e.site.rfind("emotion.text_expert1", 0) == 0) saw_text1 = true;
    if (e.site.rfind("emotion.image_expert0", 0) == 0) saw_image0 = true;
    if (e.site.rfind("emotion.combine", 0) == 0) saw_combine = true;
  }
  tape.clear();
  EXPECT_TRUE(saw_text1);
  EXPECT_TRUE(saw_image0);
  EXPECT_TRUE(saw_combine);
}

TEST(EmotionModule, GradientsPassFiniteDifferenceCheck) {
  ken::EmotionConfig cfg;
  cfg.d = 3;
  cfg.d_e = 2;
  cfg.d_e_out = 2;
  cfg.experts = 2;
  ModelParams params;
  auto p = ken::EmotionParams::create(params, cfg, 123);
  ken::RngStream rng(43);
  Tensor T = random_tensor({2, 3}, rng);
  Tensor V = random_tensor({2, 3}, rng);
  auto forward = [&]() {
    auto out = ken::emotion_forward(p, T, V);
    return ken::add(ken::sum(out.m_e), ken::cross_entropy(out.logits, {1}));
  };
  testsupport::NamedParams named(params.entries().begin(), params.entries().end());
  auto res = testsupport::check_gradients(named, forward);
  EXPECT_LT(res.max_rel_err, 1e-4) << res.worst_param << "[" << res.worst_index << "] analytic "
                                   << res.analytic << " numeric " << res.numeric;
}
