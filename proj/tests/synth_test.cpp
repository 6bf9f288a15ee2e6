#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "signmap/signmap.hpp"
#include "test_util.hpp"

using namespace signmap;
using namespace signmap::testing;

namespace {

bool same_poses(const std::vector<FramePose>& a, const std::vector<FramePose>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].frame_id != b[i].frame_id || a[i].rotation != b[i].rotation ||
        a[i].position != b[i].position) {
      return false;
    }
  }
  return true;
}

SweepSpec small_sweep() {
  SweepSpec s;
  s.mode = SweepMode::kTwoAtATime;
  s.groups = {ParamGroup::kFocal, ParamGroup::kDistortion};
  s.range = {-6.0, 0.0, 6.0};
  s.repeats = 2;
  return s;
}

}  // namespace

TEST(Journey, Deterministic) {
  const auto spec = noisy_scenario(42);
  const auto a = generate_journey(spec);
  const auto b = generate_journey(spec);
  EXPECT_TRUE(same_poses(a.gt_poses, b.gt_poses));
  EXPECT_TRUE(same_poses(a.estimated_poses, b.estimated_poses));
  ASSERT_EQ(a.detections.size(), b.detections.size());
  for (std::size_t i = 0; i < a.detections.size(); ++i) {
    EXPECT_EQ(a.detections[i].pixel.u, b.detections[i].pixel.u);
    EXPECT_EQ(a.detections[i].pixel.v, b.detections[i].pixel.v);
  }
  ASSERT_EQ(a.gps.size(), b.gps.size());
  for (std::size_t i = 0; i < a.gps.size(); ++i) EXPECT_EQ(a.gps[i].geo.lat, b.gps[i].geo.lat);
  EXPECT_FALSE(same_poses(a.estimated_poses, generate_journey(noisy_scenario(43)).estimated_poses));
}

TEST(Journey, DetectionsInsideImage) {
  const auto spec = noisy_scenario(3);
  const auto j = generate_journey(spec);
  for (const auto& d : j.detections) {
    EXPECT_TRUE(spec.calibration.intrinsics.contains(d.pixel));
  }
  EXPECT_EQ(j.signs.size(), std::size_t(spec.n_signs));
  EXPECT_EQ(j.gps.size(), j.gt_poses.size());
  EXPECT_EQ(j.estimated_poses.size(), j.gt_poses.size());
}

TEST(Journey, EmptySceneRejected) {
  ScenarioSpec spec;
  spec.n_signs = 0;
  EXPECT_THROW(generate_journey(spec), EmptyScene);
  spec = ScenarioSpec{};
  spec.pixel_noise_sigma = -1.0;
  EXPECT_THROW(generate_journey(spec), InvalidArgument);
}

TEST(ClosedLoop, NoiseFreeRecoversGroundTruth) {
  for (std::uint64_t seed : {1, 2, 3}) {
    ScenarioSpec spec;
    spec.seed = seed;
    const auto j = generate_journey(spec);
    for (auto mode : {TriangulationMode::kFull, TriangulationMode::kShort}) {
      const auto e = closed_loop_error(j, run_journey(j, mode, spec.calibration));
      EXPECT_GE(e.triangulated, 10u);
      EXPECT_LT(e.max_abs, 1e-6) << seed;
      EXPECT_LT(e.max_rel, 1e-6) << seed;
    }
  }
}

TEST(ClosedLoop, DenserFramesStayExact) {
  ScenarioSpec spec;
  const auto base = generate_journey(spec);
  spec.frame_rate *= 2.0;
  const auto dense = generate_journey(spec);
  EXPECT_GT(dense.detections.size(), base.detections.size());
  const auto e1 = closed_loop_error(base, run_journey(base, TriangulationMode::kShort, spec.calibration));
  const auto e2 = closed_loop_error(dense, run_journey(dense, TriangulationMode::kShort, spec.calibration));
  EXPECT_LT(e1.max_abs, 1e-6);
  EXPECT_LT(e2.max_abs, 1e-6);
}

TEST(ClosedLoop, NoisyErrorsInExpectedBand) {
  int in_band = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto spec = noisy_scenario(seed);
    const auto j = generate_journey(spec);
    const auto ok = successes(run_journey(j, TriangulationMode::kShort, spec.calibration));
    const auto e = sign_errors(ok, j.signs, j.gt_poses);
    if (e.abs_mean >= 0.1 && e.abs_mean <= 2.0) ++in_band;
  }
  EXPECT_GE(in_band, 18);
}

TEST(Sweep, ZeroCellEqualsUnperturbedRun) {
  const ScenarioSpec scenario = noisy_scenario(9);
  const auto sweep = small_sweep();
  const auto grids = run_sweep(scenario, sweep);
  ASSERT_EQ(grids.size(), 1u);
  const auto journeys = sweep_journeys(scenario, sweep.repeats);
  std::vector<double> direct;
  for (const auto& j : journeys) {
    const auto s = score_journey(j, scenario.calibration, sweep.pipeline);
    ASSERT_TRUE(s.score);
    direct.push_back(*s.score);
  }
  const auto zero = std::find_if(grids[0].cells.begin(), grids[0].cells.end(),
                                 [](const SweepCell& c) { return c.pct1 == 0.0 && c.pct2 == 0.0; });
  ASSERT_NE(zero, grids[0].cells.end());
  ASSERT_TRUE(zero->score);
  EXPECT_EQ(*zero->score, *std::min_element(direct.begin(), direct.end()));
}

TEST(Sweep, GridMatchesDirectRecomputation) {
  const ScenarioSpec scenario = noisy_scenario(10);
  const auto sweep = small_sweep();
  const auto grids = run_sweep(scenario, sweep);
  const auto journeys = sweep_journeys(scenario, sweep.repeats);
  ASSERT_EQ(grids[0].cells.size(), 9u);
  for (const auto& cell : grids[0].cells) {
    Perturbation p;
    p.focal_pct = cell.pct1;
    p.lambda1_pct = p.lambda2_pct = cell.pct2;
    const auto calib = perturb(scenario.calibration, p);
    std::optional<double> best;
    for (const auto& j : journeys) {
      const auto s = score_journey(j, calib, sweep.pipeline);
      if (s.score) best = best ? std::min(*best, *s.score) : *s.score;
    }
    EXPECT_EQ(cell.score, best) << cell.pct1 << "," << cell.pct2;
  }
}

TEST(Sweep, CellsIndependentOfExecutionOrder) {
  const ScenarioSpec scenario = noisy_scenario(11);
  auto sweep = small_sweep();
  const auto grids = run_sweep(scenario, sweep);
  const auto journeys = sweep_journeys(scenario, sweep.repeats);
  auto cells = sweep_layout(sweep)[0].cells;
  std::mt19937_64 rng(5);
  std::shuffle(cells.begin(), cells.end(), rng);
  for (const auto& c : cells) {
    const auto r = evaluate_cell(c, journeys, scenario, sweep);
    const auto it = std::find_if(grids[0].cells.begin(), grids[0].cells.end(), [&](const SweepCell& g) {
      return g.pct1 == c.pct1 && g.pct2 == c.pct2;
    });
    ASSERT_NE(it, grids[0].cells.end());
    EXPECT_EQ(r.score, it->score);
    EXPECT_EQ(r.failed_signs, it->failed_signs);
  }
  sweep.threads = 3;
  const auto threaded = run_sweep(scenario, sweep);
  for (std::size_t i = 0; i < grids[0].cells.size(); ++i) {
    EXPECT_EQ(threaded[0].cells[i].score, grids[0].cells[i].score);
  }
}

TEST(Sweep, InvalidPerturbationRecordedAsFailure) {
  ScenarioSpec scenario = noisy_scenario(12);
  SweepSpec sweep;
  sweep.groups = {ParamGroup::kFocal};
  sweep.range = {-100.0};
  sweep.repeats = 2;
  const auto grids = run_sweep(scenario, sweep);
  ASSERT_EQ(grids[0].cells.size(), 1u);
  EXPECT_FALSE(grids[0].cells[0].score);
  EXPECT_EQ(grids[0].cells[0].failed_signs, std::size_t(2 * scenario.n_signs));
}

TEST(Sweep, LayoutShapes) {
  SweepSpec s;
  EXPECT_EQ(sweep_layout(s).size(), 3u);
  EXPECT_EQ(sweep_layout(s)[0].cells.size(), 11u);
  s.mode = SweepMode::kFocalPrincipalVsDistortion;
  const auto g = sweep_layout(s);
  ASSERT_EQ(g.size(), 1u);
  EXPECT_EQ(g[0].cells.size(), 121u);
  const auto& c = g[0].cells[0];
  EXPECT_EQ(c.perturbation.focal_pct, -15.0);
  EXPECT_EQ(c.perturbation.principal_pct, -15.0);
  EXPECT_EQ(c.perturbation.lambda1_pct, -15.0);
  s.mode = SweepMode::kTwoAtATime;
  EXPECT_THROW(sweep_layout(s), InvalidArgument);
}

TEST(Sweep, Aggregates) {
  EXPECT_EQ(aggregate_scores({3, 1, 2}, Aggregate::kMin), 1.0);
  EXPECT_EQ(aggregate_scores({3, 1, 2}, Aggregate::kMean), 2.0);
  EXPECT_EQ(aggregate_scores({4, 1, 3, 2}, Aggregate::kMedian), 2.5);
  EXPECT_FALSE(aggregate_scores({}, Aggregate::kMin));
}

TEST(Sweep, RepeatSeedsDistinct) {
  std::set<std::uint64_t> seen;
  for (int r = 0; r < 100; ++r) seen.insert(repeat_seed(1, r));
  EXPECT_EQ(seen.size(), 100u);
  EXPECT_NE(repeat_seed(1, 0), repeat_seed(2, 0));
}
