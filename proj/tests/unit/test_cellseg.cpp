#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "bria/cellseg.hpp"
#include "bria/error.hpp"
#include "bria/synth.hpp"
#include "tempdir.hpp"

using namespace bria;
using cellseg::ProbMaps;

namespace {

ProbMaps uniform_maps(int w, int h, float c, float b, float g) {
  ProbMaps m(w, h);
  std::fill(m.cell.pixels().begin(), m.cell.pixels().end(), c);
  std::fill(m.boundary.pixels().begin(), m.boundary.pixels().end(), b);
  std::fill(m.background.pixels().begin(), m.background.pixels().end(), g);
  return m;
}

synth::CellSpec cell_at(double x, double y, double rn, double rc) {
  synth::CellSpec c;
  c.center = {x, y};
  c.nucleus_radius_px = rn;
  c.cell_radius_px = rc;
  c.peaks = {2500.0, 30.0, 1800.0};
  return c;
}

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::ParseError;
}

double object_dice(const cellseg::CellMask& cm, const LabelImage& truth, int label) {
  long inter = 0, gt = 0;
  for (auto v : truth.pixels()) gt += v == label;
  for (int y = 0; y < cm.mask.height(); ++y)
    for (int x = 0; x < cm.mask.width(); ++x)
      inter += cm.mask(x, y) && truth(x + cm.offset.x, y + cm.offset.y) == label;
  return 2.0 * inter / static_cast<double>(cm.area_px + gt);
}

}  // namespace

TEST(Probmaps, BlankFovIsDegenerate) {
  io::Planes p{Plane16(64, 64, 100), Plane16(64, 64, 100), Plane16(64, 64, 100)};
  EXPECT_EQ(code_of([&] { cellseg::classical_probmaps(p); }), ErrorCode::DegenerateInput);
}

TEST(Probmaps, PlantedDiskCoverageAndNormalisation) {
  const auto r = synth::render_cells(96, 96, std::vector{cell_at(48, 48, 7, 12)}, 0.0);
  const auto fov = synth::apply_noise(r.signal, synth::NoiseSpec{}, 2, {0, 0});
  const ProbMaps m = cellseg::classical_probmaps(fov);
  long inside = 0, covered = 0;
  for (std::size_t i = 0; i < m.cell.size(); ++i) {
    EXPECT_NEAR(m.cell[i] + m.boundary[i] + m.background[i], 1.0f, 1e-5f);
    if (r.cell_labels[i]) {
      ++inside;
      covered += m.cell[i] >= 0.5f;
    }
  }
  EXPECT_GE(covered, 0.9 * inside);
}

TEST(Probmaps, SaveLoadRoundTrip) {
  TempDir dir;
  ProbMaps m = uniform_maps(10, 6, 0.25f, 0.25f, 0.5f);
  m.cell(3, 2) = 0.75f;
  m.background(3, 2) = 0.0f;
  cellseg::save_probmaps(dir / "maps.json", m);
  const ProbMaps back = cellseg::load_probmaps(dir / "maps.json");
  for (std::size_t i = 0; i < m.cell.size(); ++i) {
    EXPECT_NEAR(back.cell[i], m.cell[i], 1.0 / 65535);
    EXPECT_NEAR(back.background[i], m.background[i], 1.0 / 65535);
  }
}

TEST(Probmaps, SlightlyOffSumIsRenormalised) {
  const ProbMaps v = cellseg::validate_probmaps(uniform_maps(4, 4, 0.5f, 0.26f, 0.26f));
  for (std::size_t i = 0; i < v.cell.size(); ++i) EXPECT_NEAR(v.cell[i] + v.boundary[i] + v.background[i], 1.0f, 1e-6f);
  EXPECT_NEAR(v.cell[0], 0.5f / 1.02f, 1e-6f);
}

TEST(Probmaps, LargeSumIsNotNormalizable) {
  EXPECT_EQ(code_of([] { cellseg::validate_probmaps(uniform_maps(4, 4, 0.5f, 0.5f, 0.5f)); }),
            ErrorCode::NotNormalizable);
  ProbMaps bad = uniform_maps(4, 4, 0.3f, 0.3f, 0.4f);
  bad.boundary = PlaneF(3, 4, 0.3f);
  EXPECT_EQ(code_of([&] { cellseg::validate_probmaps(bad); }), ErrorCode::ShapeMismatch);
}

TEST(Merge, SinglePatchIsIdentity) {
  std::mt19937 rng(1);
  ProbMaps m(12, 9);
  for (std::size_t i = 0; i < m.cell.size(); ++i) {
    const float a = (rng() % 1000) / 1000.0f, b = (rng() % 1000) / 1000.0f, c = (rng() % 1000) / 1000.0f + 0.01f;
    m.cell[i] = a / (a + b + c);
    m.boundary[i] = b / (a + b + c);
    m.background[i] = c / (a + b + c);
  }
  const std::vector<cellseg::Patch> p{{m, {0, 0}}};
  const ProbMaps out = cellseg::merge_patches(p, 12, 9);
  for (std::size_t i = 0; i < m.cell.size(); ++i) EXPECT_NEAR(out.cell[i], m.cell[i], 1e-6f);
}

TEST(Merge, MaxRuleOnOverlap) {
  const std::vector<cellseg::Patch> p{{uniform_maps(6, 4, 0.9f, 0.05f, 0.05f), {0, 0}},
                                      {uniform_maps(6, 4, 0.4f, 0.3f, 0.3f), {3, 0}}};
  const ProbMaps out = cellseg::merge_patches(p, 9, 4);
  // Overlap columns 3..5: cell 0.9, boundary 0.3, background 1 - max(0.95, 0.7).
  const double c = 0.9, b = 0.3, g = 1.0 - 0.95, s = c + b + g;
  EXPECT_NEAR(out.cell(4, 1), c / s, 1e-6);
  EXPECT_NEAR(out.boundary(4, 1), b / s, 1e-6);
  EXPECT_NEAR(out.background(4, 1), g / s, 1e-6);
  EXPECT_NEAR(out.cell(0, 0), 0.9, 1e-6);
  EXPECT_NEAR(out.cell(8, 0), 0.4, 1e-6);
}

TEST(Merge, IdenticalOverlapEqualsEitherPatch) {
  const ProbMaps m = uniform_maps(8, 8, 0.2f, 0.3f, 0.5f);
  const std::vector<cellseg::Patch> p{{m, {0, 0}}, {m, {4, 0}}};
  const ProbMaps out = cellseg::merge_patches(p, 12, 8);
  EXPECT_NEAR(out.cell(5, 5), 0.2f, 1e-6f);
  EXPECT_NEAR(out.background(5, 5), 0.5f, 1e-6f);
}

TEST(Merge, GapIsReported) {
  const std::vector<cellseg::Patch> p{{uniform_maps(4, 4, 0.2f, 0.3f, 0.5f), {0, 0}}};
  EXPECT_EQ(code_of([&] { cellseg::merge_patches(p, 5, 4); }), ErrorCode::CoverageGap);
}

TEST(Merge, OrderInvariantBitExact) {
  std::mt19937 rng(7);
  std::vector<cellseg::Patch> patches;
  for (int k = 0; k < 6; ++k) {
    ProbMaps m(20, 20);
    for (std::size_t i = 0; i < m.cell.size(); ++i) {
      const float a = rng() % 997 + 1.0f, b = rng() % 997 + 1.0f, c = rng() % 997 + 1.0f;
      m.cell[i] = a / (a + b + c);
      m.boundary[i] = b / (a + b + c);
      m.background[i] = c / (a + b + c);
    }
    patches.push_back({m, {static_cast<int>(rng() % 21), static_cast<int>(rng() % 21)}});
  }
  patches.push_back({ProbMaps(40, 40), {0, 0}});
  const ProbMaps ref = cellseg::merge_patches(patches, 40, 40);
  for (int t = 0; t < 10; ++t) {
    std::shuffle(patches.begin(), patches.end(), rng);
    const ProbMaps out = cellseg::merge_patches(patches, 40, 40);
    EXPECT_TRUE(out.cell == ref.cell && out.boundary == ref.boundary && out.background == ref.background);
  }
}

TEST(PatchPlan, GridAndDropRule) {
  EXPECT_EQ(cellseg::patch_grid(2040, 2040).size(), 25u);
  const std::vector<detect::Detection> tl{{{100, 100}, 6, 1}};
  const auto w = cellseg::patch_plan(2040, 2040, tl);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0], (cellseg::Window{0, 0, 512, 512}));
  EXPECT_TRUE(cellseg::patch_plan(2040, 2040, {}).empty());
  for (const auto& win : cellseg::patch_grid(2040, 2040)) {
    EXPECT_LE(win.x + win.width, 2040);
    EXPECT_LE(win.y + win.height, 2040);
  }
}

TEST(Watershed, SeparatedDisks) {
  const auto r = synth::render_cells(120, 80, std::vector{cell_at(35, 40, 6, 11), cell_at(85, 40, 6, 11)}, 0.0);
  const auto fov = synth::apply_noise(r.signal, synth::NoiseSpec{}, 3, {0, 0});
  const std::vector<detect::Detection> seeds{{{35, 40}, 6, 1}, {{85, 40}, 6, 1}};
  const auto inst = cellseg::instance_segment(cellseg::classical_probmaps(fov), seeds);
  ASSERT_EQ(inst.masks.size(), 2u);
  for (const auto& cm : inst.masks) EXPECT_GE(object_dice(cm, r.cell_labels, cm.detection_index + 1), 0.9);
}

TEST(Watershed, TouchingPairSplitsAlongRidge) {
  const auto r = synth::render_cells(100, 60, std::vector{cell_at(38, 30, 6, 10), cell_at(58.5, 30, 6, 10.5)}, 0.0);
  const auto fov = synth::apply_noise(r.signal, synth::NoiseSpec{}, 5, {0, 0});
  const std::vector<detect::Detection> seeds{{{38, 30}, 6, 1}, {{58.5, 30}, 6, 1}};
  const auto inst = cellseg::instance_segment(cellseg::classical_probmaps(fov), seeds);
  ASSERT_EQ(inst.masks.size(), 2u);
  for (const auto& cm : inst.masks) EXPECT_GE(object_dice(cm, r.cell_labels, cm.detection_index + 1), 0.9);
  // Labels are a partition, so masks are disjoint.
  for (std::size_t i = 0; i < inst.labels.size(); ++i) EXPECT_LE(inst.labels[i], 2);
}

TEST(Watershed, UniformBackgroundGivesNoMasks) {
  const std::vector<detect::Detection> seeds{{{10, 10}, 6, 1}};
  const auto inst = cellseg::instance_segment(ProbMaps(20, 20), seeds);
  EXPECT_TRUE(inst.masks.empty());
}

TEST(Watershed, MaskInWindowClips) {
  cellseg::CellMask cm;
  cm.mask = Mask(3, 3, 1);
  cm.offset = {10, 10};
  const Mask w = cellseg::mask_in_window(cm, {11, 11}, 4, 4);
  EXPECT_EQ(w(0, 0), 1);
  EXPECT_EQ(w(1, 1), 1);
  EXPECT_EQ(w(2, 2), 0);
}
