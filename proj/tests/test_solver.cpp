#include <gtest/gtest.h>

#include "skl/model/solver.hpp"
#include "support/fixtures.hpp"

using namespace skl;

namespace {

struct Fixture {
  TensorSet<double> params, grads, velocity;
};

// One body conv weight, one batch-norm gain, one head weight, one running mean.
Fixture tiny(double p0) {
  auto info = std::make_shared<std::vector<ParamInfo>>(std::vector<ParamInfo>{
      {"stem.0.conv.weight", {1, 1, 1, 1}, ParamKind::conv_weight, 1, 1},
      {"stem.0.bn.gamma", {1}, ParamKind::bn_gamma, 1, 1},
      {"stem.0.bn.running_mean", {1}, ParamKind::bn_running_mean, 1, 1},
      {"head.weight", {1, 1}, ParamKind::dense_weight, 1, 1}});
  Fixture f{TensorSet<double>(info), TensorSet<double>(info), TensorSet<double>(info)};
  for (std::size_t i = 0; i < 4; ++i) f.params[i](0, 0) = p0;
  return f;
}

}  // namespace

TEST(Solver, DefaultsAreTheTrainingTable) {
  SolverConfig s;
  EXPECT_EQ(s.base_lr, 0.01);
  EXPECT_EQ(s.weight_decay, 0.00001);
  EXPECT_EQ(s.momentum, 0.9);
  EXPECT_EQ(s.gamma, 0.1);
  EXPECT_EQ(s.batch_size, 5);
  EXPECT_EQ(s.iter_size, 12);
  EXPECT_EQ(s.max_iter, 176180);
  EXPECT_EQ(s.stepsize, 17618);
  EXPECT_EQ(s.test_interval, 2000);
  EXPECT_EQ(s.test_iter, 22023);
  EXPECT_EQ(s.lr_multiplier("head.weight"), 10.0);
  EXPECT_EQ(s.lr_multiplier("stage1.block0.conv1.weight"), 1.0);
}

TEST(Solver, StepDecaySchedule) {
  SolverConfig s;
  EXPECT_EQ(lr_at(0, s), 0.01);
  EXPECT_EQ(lr_at(17617, s), 0.01);
  EXPECT_EQ(lr_at(17618, s), 0.001);
  EXPECT_EQ(lr_at(35235, s), 0.001);
  EXPECT_EQ(lr_at(35236, s), 0.0001);
}

TEST(Solver, MultiplierPrefixMatchesWholeComponents) {
  SolverConfig s;
  s.set_lr_mult("stage1", 2.0);
  s.set_lr_mult("stage1.block1", 3.0);
  EXPECT_EQ(s.lr_multiplier("stage1.block0.conv1.weight"), 2.0);
  EXPECT_EQ(s.lr_multiplier("stage1.block1.conv1.weight"), 3.0);
  EXPECT_EQ(s.lr_multiplier("stage10.block0.conv1.weight"), 1.0);
  EXPECT_EQ(s.lr_multiplier("header"), 1.0);
}

TEST(Sgd, PlainStep) {
  Fixture f = tiny(1.0);
  SolverConfig s;
  s.momentum = 0;
  s.weight_decay = 0;
  s.base_lr = 0.1;
  s.lr_mult.clear();
  f.grads[0](0, 0) = 1;
  sgd_update(f.params, f.grads, f.velocity, s, 0);
  EXPECT_DOUBLE_EQ(f.params[0](0, 0), 0.9);
}

TEST(Sgd, MomentumRecurrence) {
  Fixture f = tiny(0.0);
  SolverConfig s;
  s.momentum = 0.9;
  s.weight_decay = 0;
  s.base_lr = 1;
  s.lr_mult.clear();
  f.grads[0](0, 0) = 1;
  sgd_update(f.params, f.grads, f.velocity, s, 0);
  EXPECT_DOUBLE_EQ(f.velocity[0](0, 0), 1.0);
  EXPECT_DOUBLE_EQ(f.params[0](0, 0), -1.0);
  sgd_update(f.params, f.grads, f.velocity, s, 1);
  EXPECT_DOUBLE_EQ(f.velocity[0](0, 0), 1.9);
  EXPECT_DOUBLE_EQ(f.params[0](0, 0), -2.9);
}

TEST(Sgd, HeadMovesTenTimes) {
  Fixture f = tiny(0.5);
  SolverConfig s;
  s.weight_decay = 0;
  f.grads[0](0, 0) = 0.3;
  f.grads[3](0, 0) = 0.3;
  for (int it = 0; it < 3; ++it) sgd_update(f.params, f.grads, f.velocity, s, it);
  EXPECT_NEAR(f.params[3](0, 0) - 0.5, 10 * (f.params[0](0, 0) - 0.5), 1e-15);
}

TEST(Sgd, DecayOnlyOnWeightsAndRunningStatsUntouched) {
  Fixture f = tiny(2.0);
  SolverConfig s;
  s.momentum = 0;
  s.weight_decay = 0.5;
  s.base_lr = 0.1;
  s.lr_mult.clear();
  f.grads[2](0, 0) = 7;
  sgd_update(f.params, f.grads, f.velocity, s, 0);
  EXPECT_DOUBLE_EQ(f.params[0](0, 0), 2.0 - 0.1 * 0.5 * 2.0);
  EXPECT_DOUBLE_EQ(f.params[1](0, 0), 2.0);
  EXPECT_DOUBLE_EQ(f.params[2](0, 0), 2.0);
  EXPECT_DOUBLE_EQ(f.params[3](0, 0), 2.0 - 0.1 * 0.5 * 2.0);
}

TEST(Sgd, NonFiniteGradientLeavesStateAlone) {
  Fixture f = tiny(1.0);
  SolverConfig s;
  f.grads[0](0, 0) = 1;
  f.grads[3](0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    sgd_update(f.params, f.grads, f.velocity, s, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::non_finite);
    EXPECT_NE(std::string(e.what()).find("head.weight"), std::string::npos);
  }
  EXPECT_EQ(f.params[0](0, 0), 1.0);
  EXPECT_EQ(f.velocity[0](0, 0), 0.0);
}

TEST(SolverText, ParseAndRoundTrip) {
  SolverConfig s = parse_solver(
      "# fine-tune\n"
      "base_lr: 0.05\n"
      "iter_size: 2   # accumulate\n"
      "max_iter: 400\n"
      "stepsize: 100\n"
      "lr_mult: head 5\n"
      "lr_mult: stage3 0.5\n");
  EXPECT_EQ(s.base_lr, 0.05);
  EXPECT_EQ(s.iter_size, 2);
  EXPECT_EQ(s.max_iter, 400);
  EXPECT_EQ(s.momentum, 0.9);
  EXPECT_EQ(s.lr_multiplier("head.bias"), 5.0);
  EXPECT_EQ(s.lr_multiplier("stage3.block0.conv1.weight"), 0.5);
  SolverConfig back = parse_solver(to_text(s));
  EXPECT_EQ(to_text(back), to_text(s));
  EXPECT_EQ(back.lr_mult, s.lr_mult);
  EXPECT_EQ(parse_solver("").lr_multiplier("head.weight"), 10.0);
}

TEST(SolverText, Errors) {
  EXPECT_THROW(parse_solver("learning_rate: 0.1\n"), Error);
  EXPECT_THROW(parse_solver("base_lr: fast\n"), Error);
  EXPECT_THROW(parse_solver("base_lr 0.1\n"), Error);
  EXPECT_THROW(parse_solver("iter_size: 0\n"), Error);
  EXPECT_THROW(parse_solver("base_lr: -1\n"), Error);
  EXPECT_THROW(parse_solver("max_iter: 10\nstepsize: 20\n"), Error);
  fixture::TempDir dir("solver");
  EXPECT_THROW(read_solver(dir / "missing.cfg"), Error);
  write_solver(dir / "s.cfg", SolverConfig{});
  EXPECT_EQ(to_text(read_solver(dir / "s.cfg")), to_text(SolverConfig{}));
}
