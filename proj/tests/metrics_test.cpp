#include <gtest/gtest.h>

#include <random>

#include <Eigen/Geometry>

#include "signmap/metrics.hpp"
#include "test_util.hpp"

using namespace signmap;
using signmap::testing::random_rotation;

namespace {

std::vector<FramePose> spiral(int n) {
  std::vector<FramePose> poses;
  for (int i = 0; i < n; ++i) {
    const double t = 0.1 * i;
    poses.push_back({i, Eigen::AngleAxisd(t, Vec3::UnitZ()).toRotationMatrix(),
                     Vec3(20 * std::cos(t), 20 * std::sin(t), 0.5 * t)});
  }
  return poses;
}

// Reference RMSE after an independent similarity fit.
double eigen_umeyama_rmse(const std::vector<FramePose>& est, const std::vector<FramePose>& ref) {
  Eigen::Matrix3Xd a(3, est.size()), b(3, ref.size());
  for (std::size_t i = 0; i < est.size(); ++i) {
    a.col(Eigen::Index(i)) = est[i].position;
    b.col(Eigen::Index(i)) = ref[i].position;
  }
  const Eigen::Matrix4d t = Eigen::umeyama(a, b, true);
  double s = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const Vec3 p = t.topLeftCorner<3, 3>() * a.col(Eigen::Index(i)) + t.topRightCorner<3, 1>();
    s += (p - b.col(Eigen::Index(i))).squaredNorm();
  }
  return std::sqrt(s / double(est.size()));
}

SignGroundTruth gt_sign(SignId id, const Vec3& p) { return {id, "stop", p, {}}; }

TriangulatedSign result_sign(SignId id, const Vec3& p, const std::vector<FramePose>& poses = {}) {
  TriangulatedSign s;
  s.sign_id = id;
  s.class_label = "stop";
  s.abs_position = p;
  for (const auto& pose : poses) s.rel_positions[pose.frame_id] = pose.world_to_camera(p);
  return s;
}

}  // namespace

TEST(Ate, IdenticalTrajectoriesScoreZero) {
  const auto p = spiral(100);
  EXPECT_NEAR(ate_full(p, p), 0.0, 1e-9);
  const auto w = ate_5(p, p);
  EXPECT_NEAR(w.mean, 0.0, 1e-9);
  EXPECT_NEAR(w.std, 0.0, 1e-9);
  EXPECT_EQ(w.windows, 96u);
}

TEST(Ate, InvariantToSimilarity) {
  std::mt19937_64 rng(107);
  auto ref = spiral(80);
  auto est = ref;
  std::normal_distribution<double> n(0.0, 0.2);
  for (auto& p : est) p.position += Vec3(n(rng), n(rng), n(rng));
  SimilarityTransform tf;
  tf.scale = 0.2;
  tf.rotation = random_rotation(rng);
  tf.translation = Vec3(4, 5, 6);
  const auto moved = apply_similarity(tf, est);
  EXPECT_NEAR(ate_full(est, ref), ate_full(moved, ref), 1e-9);
  EXPECT_NEAR(ate_full(apply_similarity({}, est), ref), ate_full(est, ref), 1e-12);
}

TEST(Ate, NoiseLevelAndIndependentFit) {
  std::mt19937_64 rng(109);
  std::normal_distribution<double> n(0.0, 0.1 / std::sqrt(3.0));
  const auto ref = spiral(300);
  for (int seed = 0; seed < 20; ++seed) {
    auto est = ref;
    for (auto& p : est) p.position += Vec3(n(rng), n(rng), n(rng));
    const double ate = ate_full(est, ref);
    EXPECT_GT(ate, 0.05);
    EXPECT_LT(ate, 0.15);
    EXPECT_NEAR(ate, eigen_umeyama_rmse(est, ref), 1e-9);
  }
}

TEST(Ate, WindowedMatchesPerWindowRecomputation) {
  std::mt19937_64 rng(113);
  std::normal_distribution<double> n(0.0, 0.3);
  const auto ref = spiral(60);
  auto est = ref;
  for (auto& p : est) p.position += Vec3(n(rng), n(rng), n(rng));
  const auto w = ate_5(est, ref);
  std::vector<double> vals;
  for (std::size_t i = 0; i + 5 <= est.size(); ++i) {
    vals.push_back(eigen_umeyama_rmse({est.begin() + long(i), est.begin() + long(i) + 5},
                                      {ref.begin() + long(i), ref.begin() + long(i) + 5}));
  }
  double mean = 0.0;
  for (double v : vals) mean += v;
  mean /= double(vals.size());
  double var = 0.0;
  for (double v : vals) var += (v - mean) * (v - mean);
  EXPECT_NEAR(w.mean, mean, 1e-9);
  EXPECT_NEAR(w.std, std::sqrt(var / double(vals.size())), 1e-9);
}

TEST(Ate, LocalMetricIgnoresSlowDrift) {
  // A slowly bending copy is locally rigid but globally warped.
  const auto ref = spiral(400);
  auto est = ref;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double k = 1.0 + 0.002 * double(i);
    est[i].position = Eigen::AngleAxisd(0.001 * double(i), Vec3::UnitZ()) * (k * ref[i].position);
  }
  const double full = ate_full(est, ref);
  const auto local = ate_5(est, ref);
  EXPECT_GT(full, 1.0);
  EXPECT_LT(local.mean, 0.05 * full);
}

TEST(Ate, MismatchedInputsRejected) {
  const auto a = spiral(10);
  const auto b = spiral(11);
  EXPECT_THROW(ate_full(a, b), InvalidArgument);
  EXPECT_THROW(ate_5(spiral(4), spiral(4)), InvalidArgument);
  auto c = a;
  c[3].frame_id = 99;
  EXPECT_THROW(ate_full(a, c), InvalidArgument);
}

TEST(SignErrors, PerfectResultsScoreZero) {
  const auto poses = spiral(5);
  std::vector<SignGroundTruth> gt;
  std::vector<TriangulatedSign> res;
  for (int i = 1; i <= 6; ++i) {
    const Vec3 p(3.0 * i, -i, 1.0);
    gt.push_back(gt_sign(i, p));
    res.push_back(result_sign(i, p, poses));
  }
  const auto e = sign_errors(res, gt, poses);
  EXPECT_EQ(e.m, 6u);
  EXPECT_EQ(e.matched, 6u);
  EXPECT_EQ(e.abs_mean, 0.0);
  ASSERT_TRUE(e.rel_mean);
  EXPECT_NEAR(*e.rel_mean, 0.0, 1e-12);
}

TEST(SignErrors, UnitOffset) {
  const std::vector<SignGroundTruth> gt{gt_sign(1, Vec3(10, 0, 0))};
  const std::vector<TriangulatedSign> res{result_sign(1, Vec3(11, 0, 0))};
  const auto e = sign_errors(res, gt);
  EXPECT_DOUBLE_EQ(e.abs_mean, 1.0);
  EXPECT_FALSE(e.rel_mean.has_value());
}

TEST(SignErrors, RelativeErrorAveragesFrames) {
  const auto poses = spiral(4);
  const Vec3 truth(5, 5, 1);
  auto r = result_sign(1, truth + Vec3(0, 0, 0.5), poses);
  const auto e = sign_errors(std::vector{r}, std::vector{gt_sign(1, truth)}, poses);
  ASSERT_TRUE(e.rel_mean);
  // A rigid pose maps an absolute offset to the same camera-frame length.
  EXPECT_NEAR(*e.rel_mean, 0.5, 1e-12);
}

TEST(SignErrors, OrderIndependentExactly) {
  std::mt19937_64 rng(127);
  std::normal_distribution<double> n(0.0, 0.4);
  const auto poses = spiral(6);
  std::vector<SignGroundTruth> gt;
  std::vector<TriangulatedSign> res;
  for (int i = 1; i <= 12; ++i) {
    const Vec3 p(7.0 * i, 2.0 * i, 1.0);
    gt.push_back(gt_sign(i, p));
    res.push_back(result_sign(i, p + Vec3(n(rng), n(rng), n(rng)), poses));
  }
  const auto a = sign_errors(res, gt, poses);
  for (int k = 0; k < 5; ++k) {
    std::shuffle(res.begin(), res.end(), rng);
    std::shuffle(gt.begin(), gt.end(), rng);
    const auto b = sign_errors(res, gt, poses);
    EXPECT_EQ(a.abs_mean, b.abs_mean);
    EXPECT_EQ(*a.rel_mean, *b.rel_mean);
  }
}

TEST(SignErrors, NearestNeighbourFallbackWithinGate) {
  const std::vector<SignGroundTruth> gt{gt_sign(100, Vec3(0, 0, 0)), gt_sign(200, Vec3(50, 0, 0))};
  const std::vector<TriangulatedSign> res{result_sign(1, Vec3(1, 0, 0)), result_sign(2, Vec3(20, 0, 0))};
  const auto e = sign_errors(res, gt);
  EXPECT_EQ(e.m, 2u);
  EXPECT_EQ(e.matched, 1u);
  ASSERT_EQ(e.per_sign.size(), 1u);
  EXPECT_EQ(e.per_sign[0].gt_id, 100);
  EXPECT_DOUBLE_EQ(e.abs_mean, 1.0);
}

TEST(SignErrors, NoMatchesThrows) {
  const std::vector<SignGroundTruth> gt{gt_sign(100, Vec3(0, 0, 0))};
  const std::vector<TriangulatedSign> res{result_sign(1, Vec3(30, 0, 0))};
  EXPECT_THROW(sign_errors(res, gt), NoMatches);
}

TEST(SignErrors, NormalizedByCount) {
  ModeErrors e;
  e.rel_mean = 0.994;
  e.m = 12;
  ASSERT_TRUE(e.rel_normalized());
  EXPECT_NEAR(*e.rel_normalized(), 0.0828333, 1e-7);
  EXPECT_NEAR(*e.rel_normalized(), 0.083, 5e-4);
}
