#include <gtest/gtest.h>

#include <cmath>

#include "advface/errors.hpp"
#include "advface/evalharness.hpp"
#include "advface/physim.hpp"
#include "advface/smoothness.hpp"
#include "test_util.hpp"

using namespace advface;
using advface::testing::random_image;

namespace {

ImageTensor checkerboard(int n) {
  ImageTensor x(n, n, 3, 0.0);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) x.at(c, i, j) = (i + j) % 2 ? 0.8 : 0.2;
  return x;
}

double full_tv(const ImageTensor& x) {
  return tv_loss(x, BinaryMask(x.height(), x.width(), true));
}

ExtractorPtr small_model() {
  ExtractorSpec s;
  s.name = "A";
  s.input_height = 24;
  s.input_width = 24;
  s.embed_dim = 16;
  s.seed = 8;
  return std::make_shared<const FeatureExtractor>(s);
}

}  // namespace

TEST(CaptureParams, Validation) {
  CaptureParams p;
  EXPECT_NO_THROW(p.validate());
  p.illuminance = 0;
  EXPECT_THROW(p.validate(), ContractViolation);
  p = {};
  p.color_temperature = 900;
  EXPECT_THROW(p.validate(), ContractViolation);
  p = {};
  p.print_levels = 1;
  EXPECT_THROW(p.validate(), ContractViolation);
}

TEST(Print, DegenerateSettingsAreIdentity) {
  Rng rng(1);
  const ImageTensor x = random_image(20, 20, 3, rng);
  CaptureParams p = CaptureParams::neutral();
  EXPECT_LE(max_abs_diff(simulate_print(x, p), x), 1.0 / 255);
}

TEST(Print, TwoLevelsRoundHalfUp) {
  CaptureParams p = CaptureParams::neutral();
  p.print_levels = 2;
  const ImageTensor up = simulate_print(ImageTensor(4, 4, 3, 0.5), p);
  for (double v : up.data()) EXPECT_EQ(v, 1.0);
  const ImageTensor down = simulate_print(ImageTensor(4, 4, 3, 0.49), p);
  for (double v : down.data()) EXPECT_EQ(v, 0.0);
}

TEST(Print, DotGainDarkens) {
  CaptureParams p = CaptureParams::neutral();
  p.dot_gain_gamma = 1.1;
  const ImageTensor y = simulate_print(ImageTensor(4, 4, 3, 0.6), p);
  EXPECT_LT(y.at(0, 0, 0), 0.6);
}

TEST(Print, BlurReducesCheckerboardTv) {
  CaptureParams p = CaptureParams::neutral();
  p.print_blur_sigma = 0.5;
  const ImageTensor board = checkerboard(16);
  EXPECT_LT(full_tv(simulate_print(board, p)), full_tv(board));
  const ImageTensor flat(16, 16, 3, 0.4);
  EXPECT_EQ(full_tv(simulate_print(flat, p)), 0.0);
}

TEST(Blur, NeverIncreasesTv) {
  Rng rng(2);
  for (int k = 0; k < 100; ++k) {
    const ImageTensor x = random_image(12, 12, 3, rng);
    const double sigma = rng.uniform(0.2, 2.0);
    EXPECT_LE(full_tv(gaussian_blur(x, sigma)), full_tv(x) + 1e-12);
  }
}

TEST(Capture, NeutralIsIdentity) {
  Rng rng(3);
  const ImageTensor x = random_image(24, 24, 3, rng);
  const CaptureParams p = CaptureParams::neutral();
  EXPECT_LE(max_abs_diff(simulate_capture(x, p), x), 1.0 / 255);
  EXPECT_LE(max_abs_diff(simulate_capture(simulate_print(x, p), p), x), 2.0 / 255);
}

TEST(Capture, IlluminanceScaling) {
  CaptureParams p = CaptureParams::neutral();
  p.illuminance = 800;
  const ImageTensor y = simulate_capture(ImageTensor(8, 8, 3, 0.9), p);
  for (double v : y.data()) EXPECT_NEAR(v, 0.9 * 800.0 / 1200.0, 1e-12);
  EXPECT_NEAR(800.0 / 1200.0, 0.6667, 1e-4);
}

TEST(Capture, KelvinGains) {
  const auto neutral = white_balance_gains(6500);
  for (double g : neutral) EXPECT_NEAR(g, 1.0, 1e-12);
  const auto warm = white_balance_gains(3000);
  EXPECT_NEAR(warm[0], 1.0, 1e-12);
  EXPECT_NEAR(warm[1], 0.697336612695, 1e-9);
  EXPECT_NEAR(warm[2], 0.439595289775, 1e-9);
  const auto mid = white_balance_gains(5000);
  EXPECT_NEAR(mid[0], 1.0, 1e-12);
  EXPECT_NEAR(mid[1], 0.897298117578, 1e-9);
  EXPECT_NEAR(mid[2], 0.823583619936, 1e-9);
}

TEST(Capture, DeterministicGivenSeed) {
  Rng rng(4);
  const ImageTensor x = random_image(16, 16, 3, rng);
  CaptureParams p;
  p.seed = 77;
  p.yaw_degrees = 10;
  EXPECT_EQ(simulate_capture(x, p), simulate_capture(x, p));
  CaptureParams q = p;
  q.seed = 78;
  EXPECT_NE(simulate_capture(x, p), simulate_capture(x, q));
}

TEST(Warp, ZeroYawIsIdentityAndInverseRecovers) {
  Rng rng(5);
  const ImageTensor x = random_image(20, 20, 3, rng);
  EXPECT_LE(max_abs_diff(warp_yaw(x, 0.0), x), 1e-12);
  const ImageTensor smooth = gaussian_blur(x, 2.0);
  for (double yaw : {-22.5, -11.25, 11.25, 22.5}) {
    const ImageTensor back = unwarp_yaw(warp_yaw(smooth, yaw), yaw);
    BinaryMask interior(20, 20);
    for (int i = 3; i < 17; ++i)
      for (int j = 3; j < 17; ++j) interior.set(i, j, true);
    EXPECT_LT(max_abs_diff(back, smooth, interior), 0.05) << yaw;
  }
}

TEST(Warp, WholePrintStaysInFrame) {
  const ImageTensor white(20, 20, 3, 1.0);
  const ImageTensor w = warp_yaw(white, 22.5, 0.0);
  // Corner columns of the print map inside the frame, so every row keeps ink.
  for (int i = 2; i < 18; ++i) {
    double row = 0;
    for (int j = 0; j < 20; ++j) row += w.at(0, i, j);
    EXPECT_GT(row, 10.0);
  }
}

TEST(Warp, EdgeOnViewIsRejected) {
  EXPECT_THROW(warp_yaw(ImageTensor(8, 8, 3, 0.5), 90.0), ContractViolation);
}

TEST(Grid, DefaultHasTwentyPoints) {
  const CaptureGrid g = make_capture_grid({});
  ASSERT_EQ(g.points.size(), 20u);
  EXPECT_EQ(g.points.front().illuminance, 800);
  EXPECT_EQ(g.points.front().color_temperature, 3000);
  EXPECT_EQ(g.points.front().yaw_degrees, -22.5);
  EXPECT_EQ(g.points[2].yaw_degrees, 0.0);
  EXPECT_EQ(g.points[4].yaw_degrees, 22.5);
  EXPECT_EQ(g.points.back().illuminance, 1200);
  EXPECT_EQ(g.points.back().color_temperature, 5000);
  EXPECT_NE(g.points[0].seed, g.points[1].seed);
  const CaptureGrid again = make_capture_grid({});
  for (std::size_t k = 0; k < 20; ++k) EXPECT_EQ(g.points[k].seed, again.points[k].seed);
}

TEST(PhysicalAsr, NeutralPointPreservesDigitalSuccess) {
  const auto model = small_model();
  Rng rng(6);
  const ImageTensor x = gaussian_blur(random_image(24, 24, 3, rng), 1.0);
  const ImageTensor target = gaussian_blur(random_image(24, 24, 3, rng), 1.0);
  const double digital = feature_distance(model->embed(x), model->embed(target), Metric::L2);
  CaptureGrid grid{{CaptureParams::neutral()}};
  VerificationThreshold t{Metric::L2, digital * 1.05, "A"};
  const PhysicalEval e = physical_asr(x, target, grid, *model, t);
  EXPECT_EQ(e.retained, 1u);
  EXPECT_EQ(e.asr, 1.0);
}

TEST(PhysicalAsr, NoSuccessGivesZero) {
  const auto model = small_model();
  Rng rng(7);
  const ImageTensor a = random_image(24, 24, 3, rng);
  const ImageTensor b = random_image(24, 24, 3, rng);
  VerificationThreshold t{Metric::L2, 0.0, "A"};
  const PhysicalEval e = physical_asr(a, b, make_capture_grid({}), *model, t);
  EXPECT_EQ(e.asr, 0.0);
  EXPECT_EQ(e.retained, 20u);
}

TEST(PhysicalAsr, MonotoneInThreshold) {
  const auto model = small_model();
  Rng rng(8);
  const ImageTensor a = gaussian_blur(random_image(24, 24, 3, rng), 1.0);
  const ImageTensor b = gaussian_blur(random_image(24, 24, 3, rng), 1.0);
  CaptureGridSpec spec;
  spec.seed = 3;
  const CaptureGrid grid = make_capture_grid(spec);
  const PhysicalEval probe = physical_asr(a, b, grid, *model, {Metric::L2, 0.0, "A"});
  std::vector<double> cuts = probe.scores;
  std::sort(cuts.begin(), cuts.end());
  double last = -1.0;
  for (double c : cuts) {
    const double asr = physical_asr(a, b, grid, *model, {Metric::L2, c, "A"}).asr;
    EXPECT_GE(asr, last);
    last = asr;
  }
  EXPECT_EQ(last, 1.0);
}

TEST(PhysicalAsr, AllDiscardedIsDegenerate) {
  const auto model = small_model();
  Rng rng(9);
  const ImageTensor a = random_image(24, 24, 3, rng);
  PhysicalOptions opts;
  opts.sharpness_floor = 100.0;
  EXPECT_THROW(physical_asr(a, a, make_capture_grid({}), *model, {Metric::L2, 1.0, "A"}, opts),
               DegenerateGridError);
}

TEST(PhysicalAsr, WrongModelThresholdRejected) {
  const auto model = small_model();
  const ImageTensor a(24, 24, 3, 0.5);
  EXPECT_THROW(physical_asr(a, a, make_capture_grid({}), *model, {Metric::L2, 1.0, "B"}),
               ContractViolation);
}

TEST(PhysicalAsr, CaptureHookSeesEveryPoint) {
  const auto model = small_model();
  Rng rng(10);
  const ImageTensor a = random_image(24, 24, 3, rng);
  std::size_t calls = 0;
  PhysicalOptions opts;
  opts.on_capture = [&](std::size_t, const ImageTensor& x) {
    ++calls;
    EXPECT_EQ(x.height(), 24);
  };
  physical_asr(a, a, make_capture_grid({}), *model, {Metric::L2, 1.0, "A"}, opts);
  EXPECT_EQ(calls, 20u);
}
