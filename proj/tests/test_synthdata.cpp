#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "flpoison/defenses.hpp"
#include "flpoison/synthdata.hpp"
#include "helpers.hpp"

using namespace flpoison;

TEST(SynthTargets, DistancesAreTheFixedVector) {
  const std::array<double, 17> expected = {5, 10, 15, 20, 25, 30, 35, 40, 50, 60, 70, 80, 95, 110, 125, 145, 165};
  for (std::size_t i = 0; i < 17; ++i) EXPECT_EQ(kTargetDistances[i], expected[i]);
  EXPECT_TRUE(std::is_sorted(kTargetDistances.begin(), kTargetDistances.end()));
}

TEST(SynthTargets, StraightRoad) {
  const auto t = trajectory_for_curvature(0.0);
  for (std::size_t i = 0; i < kTrajectoryPoints; ++i) {
    EXPECT_EQ(t[i * 3 + kLateral], 0.0);
    EXPECT_EQ(t[i * 3 + kHeight], 0.0);
    EXPECT_EQ(t[i * 3 + kForward], 1.0);
  }
}

TEST(SynthTargets, CurvedRoadNormalizesPerPoint) {
  const double c = 0.004;
  const auto meters = denormalize(trajectory_for_curvature(c));
  for (std::size_t i = 0; i < kTrajectoryPoints; ++i) {
    const double t = kTargetDistances[i];
    EXPECT_NEAR(meters[i * 3 + kLateral], c * t * t, 1e-12);
    EXPECT_EQ(meters[i * 3 + kForward], t);
    if (i > 0) EXPECT_GE(meters[i * 3 + kForward], meters[(i - 1) * 3 + kForward]);
  }
}

TEST(SynthTargets, DenormalizeExamples) {
  const auto ones = denormalize(std::vector<double>(51, 1.0));
  for (std::size_t i = 0; i < 17; ++i) {
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(ones[i * 3 + k], kTargetDistances[i]);
  }
  for (double v : denormalize(std::vector<double>(51, 0.0))) EXPECT_EQ(v, 0.0);
  std::vector<double> first(51, 0.0);
  first[0] = 0.2;
  first[2] = 1.0;
  const auto m = denormalize(first);
  EXPECT_EQ(m[0], 1.0);
  EXPECT_EQ(m[1], 0.0);
  EXPECT_EQ(m[2], 5.0);
}

TEST(SynthScenes, DeterministicAndInRange) {
  const auto a = generate_dataset(20, 9);
  const auto b = generate_dataset(20, 9);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, generate_dataset(20, 10));
  for (const Sample& s : a) {
    EXPECT_EQ(s.image.size(), 3U * 32 * 32);
    EXPECT_EQ(s.target.size(), 51U);
    EXPECT_FALSE(s.poisoned);
    for (float v : s.image) {
      ASSERT_GE(v, 0.0F);
      ASSERT_LE(v, 1.0F);
    }
    EXPECT_LE(std::abs(s.target[0]), 0.005 * 5 + 1e-12);
  }
}

TEST(SynthScenes, ImageIsFunctionOfCurvatureAndNoiseSeed) {
  SceneConfig scene;
  EXPECT_EQ(render_scene(0.002, 77, scene), render_scene(0.002, 77, scene));
  EXPECT_NE(render_scene(0.002, 77, scene), render_scene(-0.002, 77, scene));
  scene.noise_max = 0.0;
  EXPECT_EQ(render_scene(0.002, 1, scene), render_scene(0.002, 2, scene));
}

TEST(SynthScenes, RejectsInvalidConfig) {
  SceneConfig scene;
  scene.noise_max = 0.2;
  EXPECT_THROW(generate_dataset(3, 1, scene), std::invalid_argument);
  EXPECT_THROW(generate_dataset(0, 1), std::invalid_argument);
}

TEST(SynthTrigger, DefaultSquareCountsNinePixelsPerChannel) {
  SceneConfig scene;
  scene.noise_max = 0.0;
  const auto image = render_scene(0.0, 1, scene);
  TriggerSpec spec;
  EXPECT_EQ(spec.side(32), 3);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng = make_rng(seed);
    const auto out = inject_trigger(image, scene, spec, rng);
    std::size_t touched = 0;
    for (std::size_t i = 0; i < image.size(); ++i) {
      const std::size_t ch = i / (32 * 32);
      if (out[i] == spec.color[ch]) {
        ++touched;
      } else {
        ASSERT_EQ(out[i], image[i]);
      }
    }
    EXPECT_GE(touched, 27U);  // the square itself; background pixels may already match
  }
}

TEST(SynthTrigger, ExactlySideSquaredPixelsChange) {
  SceneConfig scene;
  auto image = std::vector<float>(scene.image_length(), 0.5F);  // no pixel equals 0 or 1
  TriggerSpec spec;
  Rng rng = make_rng(3);
  const auto out = inject_trigger(image, scene, spec, rng);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < image.size(); ++i) changed += out[i] != image[i];
  EXPECT_EQ(changed, 3U * 9);
}

TEST(SynthTrigger, TopLeftIsLocal) {
  SceneConfig scene;
  const std::vector<float> image(scene.image_length(), 0.5F);
  TriggerSpec spec;
  spec.position = TriggerPosition::top_left;
  Rng rng = make_rng(1);
  const auto out = inject_trigger(image, scene, spec, rng);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    for (std::size_t r = 0; r < 32; ++r) {
      for (std::size_t c = 0; c < 32; ++c) {
        const std::size_t i = ch * 1024 + r * 32 + c;
        if (r < 3 && c < 3) {
          EXPECT_EQ(out[i], spec.color[ch]);
        } else {
          EXPECT_EQ(out[i], image[i]);
        }
      }
    }
  }
}

TEST(SynthTrigger, FullCoverPaintsWholeImage) {
  SceneConfig scene;
  const auto image = render_scene(0.001, 4, scene);
  TriggerSpec spec;
  spec.size_fraction = 1.0;
  spec.position = TriggerPosition::center;
  Rng rng = make_rng(1);
  const auto out = inject_trigger(image, scene, spec, rng);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], spec.color[i / 1024]);
}

TEST(SynthTrigger, RandomPositionsCoverTheImage) {
  SceneConfig scene;
  const std::vector<float> image(scene.image_length(), 0.5F);
  TriggerSpec spec;
  std::set<std::size_t> corners;
  Rng rng = make_rng(2);
  for (int k = 0; k < 20000; ++k) {
    const auto out = inject_trigger(image, scene, spec, rng);
    for (std::size_t i = 0; i < 1024; ++i) {
      if (out[i] != 0.5F) {
        corners.insert(i);
        break;
      }
    }
  }
  EXPECT_EQ(corners.size(), 30U * 30U);  // every valid top-left corner
}

TEST(SynthTrigger, RejectsSquareThatDoesNotFit) {
  SceneConfig scene;
  scene.width = 8;
  TriggerSpec spec;
  spec.size_fraction = 0.5;  // side 16 > width 8
  const std::vector<float> image(scene.image_length(), 0.0F);
  Rng rng = make_rng(1);
  EXPECT_THROW(inject_trigger(image, scene, spec, rng), std::invalid_argument);
}

TEST(SynthTurn, RampOnLastFivePoints) {
  const auto target = trajectory_for_curvature(0.003);
  EXPECT_EQ(make_turn_target(target, 0.0), target);
  for (int dir : {1, -1}) {
    const auto turned = make_turn_target(target, 0.5, dir);
    for (std::size_t k = 0; k < 36; ++k) EXPECT_EQ(turned[k], target[k]);
    for (std::size_t i = 12; i < 17; ++i) {
      const double offset = dir * 0.5 * static_cast<double>(i - 11) / 5.0;
      EXPECT_NEAR(turned[i * 3 + kLateral], target[i * 3 + kLateral] + offset, 1e-15);
      EXPECT_EQ(turned[i * 3 + kHeight], target[i * 3 + kHeight]);
      EXPECT_EQ(turned[i * 3 + kForward], target[i * 3 + kForward]);
    }
    EXPECT_EQ(turned[16 * 3] - target[16 * 3], dir * 0.5);
  }
}

TEST(SynthBackdoorSet, SameTargetsTriggeredImages) {
  const auto test = generate_dataset(30, 4);
  const auto bd = build_backdoor_testset(test, TriggerSpec{}, 5, SceneConfig{});
  ASSERT_EQ(bd.size(), test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    EXPECT_EQ(bd[i].target, test[i].target);
    EXPECT_TRUE(bd[i].poisoned);
    EXPECT_NE(bd[i].image, test[i].image);
  }
}

TEST(SynthSplit, ExhaustivePartitionOfSixSamples) {
  auto all = generate_dataset(6, 1, SceneConfig{8, 8, 0.005, 0.1});
  const auto split = split_dataset(all, 2, 2, 1, 1, 1, 3, SceneConfig{8, 8, 0.005, 0.1});
  std::set<std::uint64_t> ids;
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 2; ++c) {
      ASSERT_EQ(split.cell(r, c).size(), 1U);
      ids.insert(split.cell(r, c).front().id);
    }
  }
  ASSERT_EQ(split.test.size(), 1U);
  ASSERT_EQ(split.defense.size(), 1U);
  ids.insert(split.test.front().id);
  ids.insert(split.defense.front().id);
  EXPECT_EQ(ids, (std::set<std::uint64_t>{0, 1, 2, 3, 4, 5}));
  EXPECT_EQ(split.backdoor_test.size(), 1U);
}

TEST(SynthSplit, DefaultDeskScaleCellsAreDisjointAndEqual) {
  SceneConfig scene;
  scene.height = 8;
  scene.width = 8;
  const auto split = split_dataset(generate_dataset(8030, 2, scene), 30, 40, 6, 800, 30, 2, scene);
  std::set<std::uint64_t> seen;
  std::size_t total = 0;
  for (const auto& cell : split.cells) {
    ASSERT_EQ(cell.size(), 6U);
    for (const Sample& s : cell) seen.insert(s.id);
    total += cell.size();
  }
  for (const Sample& s : split.test) seen.insert(s.id);
  for (const Sample& s : split.defense) seen.insert(s.id);
  total += split.test.size() + split.defense.size();
  EXPECT_EQ(seen.size(), total);
  EXPECT_EQ(total, 8030U);
  EXPECT_EQ(split.backdoor_test.size(), split.test.size());
}

TEST(SynthSplit, SeededAndRejectsShortInput) {
  SceneConfig scene{8, 8, 0.005, 0.1};
  const auto all = generate_dataset(50, 2, scene);
  const auto a = split_dataset(all, 2, 3, 4, 10, 5, 9, scene);
  const auto b = split_dataset(all, 2, 3, 4, 10, 5, 9, scene);
  EXPECT_EQ(a.cells, b.cells);
  EXPECT_NE(a.cells, split_dataset(all, 2, 3, 4, 10, 5, 10, scene).cells);
  EXPECT_THROW(split_dataset(all, 3, 3, 5, 10, 5, 9, scene), std::invalid_argument);
}

TEST(SynthSplit, LeftoversAreDiscarded) {
  SceneConfig scene{8, 8, 0.005, 0.1};
  const auto split = split_dataset(generate_dataset(100, 2, scene), 2, 2, 3, 5, 4, 1, scene);
  EXPECT_EQ(split.cells.size(), 4U);
  EXPECT_EQ(split.test.size(), 5U);
  EXPECT_EQ(split.defense.size(), 4U);
}

TEST(SynthLearnability, TwentyEpochsHalveTestLoss) {
  SceneConfig scene;
  const auto train = generate_dataset(1000, 11, scene);
  const auto test = generate_dataset(200, 12, scene);
  const auto start = init_model({scene.image_length(), 64, 32, 51}, 13);
  TrainingHyper hyper;
  hyper.epochs = 20;
  const auto trained = train_honest(start, train, hyper, 14);
  EXPECT_LT(loss_of(trained, test), 0.5 * loss_of(start, test));
}

TEST(DatasetIo, RoundTripIsExact) {
  const auto dir = flpoison::testing::scratch_dir("dataset_io");
  SceneConfig scene{8, 8, 0.005, 0.1};
  auto data = generate_dataset(12, 3, scene);
  data[4].poisoned = true;
  write_dataset((dir / "d.bin").string(), data, 3);
  std::uint64_t seed = 0;
  const auto back = read_dataset((dir / "d.bin").string(), &seed);
  EXPECT_EQ(seed, 3U);
  EXPECT_EQ(back, data);
}

TEST(DatasetIo, RejectsForeignFiles) {
  const auto dir = flpoison::testing::scratch_dir("dataset_io_bad");
  {
    std::ofstream out(dir / "x.bin", std::ios::binary);
    out << "not a dataset at all";
  }
  EXPECT_THROW(read_dataset((dir / "x.bin").string()), std::runtime_error);
  EXPECT_THROW(read_dataset((dir / "missing.bin").string()), std::runtime_error);
}
