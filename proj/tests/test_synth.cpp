#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "dataprov/error.hpp"
#include "dataprov/seed.hpp"
#include "dataprov/synth.hpp"

using namespace dataprov;
using namespace dataprov::synth;

namespace {

struct Fixture {
  WorldParams world;
  Matrix prototypes;
  GeneratorSpec gen;
  PromptSpec prompt;

  explicit Fixture(WorldParams w = {}, std::uint64_t gen_seed = 1)
      : world(w),
        prototypes(make_prototypes(world)),
        gen(make_generator("g", world, prototypes, gen_seed)),
        prompt(make_prompt("p", world.num_classes, world.dim, 0.2, 9)) {}
};

}  // namespace

TEST(Synth, DeterministicAndBalanced) {
  Fixture f;
  const auto a = sample_synthetic(f.gen, f.prompt, 40, 5);
  const auto b = sample_synthetic(f.gen, f.prompt, 40, 5);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.labels, b.labels);
  for (auto n : a.class_counts()) EXPECT_EQ(n, 40u);
  for (double x : a.features.values()) EXPECT_TRUE(std::isfinite(x));
  const auto c = sample_synthetic(f.gen, f.prompt, 40, 6);
  EXPECT_NE(a.features, c.features);
}

TEST(Synth, RealSourceBalancedAndDeterministic) {
  Fixture f;
  const auto real = make_real_source("real", f.world, f.prototypes, 3);
  const auto a = sample_real(real, 25, 1);
  EXPECT_EQ(a.features, sample_real(real, 25, 1).features);
  for (auto n : a.class_counts()) EXPECT_EQ(n, 25u);
}

TEST(Synth, NoiselessLimitHitsClassMean) {
  WorldParams w;
  w.noise_scale = 1e-300;
  Fixture f(w);
  const auto data = sample_synthetic(f.gen, f.prompt, 1, 4);
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto want = class_mean(f.gen, f.prompt, data.labels[r]);
    for (std::size_t i = 0; i < data.dim(); ++i) EXPECT_EQ(data.features(r, i), want[i]);
  }
}

TEST(Synth, ZeroShiftPromptsGiveSameDistribution) {
  Fixture f;
  const auto p1 = make_prompt("a", f.world.num_classes, f.world.dim, 0.0, 1);
  const auto p2 = make_prompt("b", f.world.num_classes, f.world.dim, 0.0, 2);
  for (std::size_t c = 0; c < f.world.num_classes; ++c) EXPECT_EQ(class_mean(f.gen, p1, c), class_mean(f.gen, p2, c));
  const std::size_t n = 400;
  const auto m1 = class_means(sample_synthetic(f.gen, p1, n, 1));
  const auto m2 = class_means(sample_synthetic(f.gen, p2, n, 1));
  // Each coordinate difference has sd sigma*sqrt(2/n); bound the per-class RMS.
  const double sigma = f.world.noise_scale;
  for (std::size_t c = 0; c < f.world.num_classes; ++c) {
    double sq = 0;
    for (std::size_t i = 0; i < f.world.dim; ++i) sq += std::pow(m1(c, i) - m2(c, i), 2);
    EXPECT_LT(std::sqrt(sq / f.world.dim), 3 * sigma * std::sqrt(2.0 / n)) << c;
  }
}

TEST(Synth, ClassMeanRecovery) {
  WorldParams w;
  w.noise_scale = 0.5;
  const std::size_t n = 500;
  double norm_total = 0;
  int trials = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Fixture f(w, seed + 100);
    const auto data = sample_synthetic(f.gen, f.prompt, n, seed);
    const auto means = class_means(data);
    for (std::size_t c = 0; c < w.num_classes; ++c) {
      const auto want = class_mean(f.gen, f.prompt, c);
      double sq = 0;
      for (std::size_t i = 0; i < w.dim; ++i) sq += std::pow(means(c, i) - want[i], 2);
      // 4-sigma bound on the per-coordinate RMS error.
      EXPECT_LT(std::sqrt(sq / w.dim), 4 * w.noise_scale / std::sqrt(double(n)));
      norm_total += std::sqrt(sq);
      ++trials;
    }
  }
  // The mean error norm concentrates at sigma * sqrt(d / n) * E[chi_d] / sqrt(d).
  const double expected = w.noise_scale * std::sqrt(double(w.dim) / n) * 0.9843;
  EXPECT_NEAR(norm_total / trials, expected, 0.05 * expected);
}

TEST(Synth, RealSourceMeanRecovery) {
  WorldParams w;
  w.heavy_tail_mix = 0.0;
  Fixture f(w);
  const auto real = make_real_source("real", w, f.prototypes, 8);
  const std::size_t n = 500;
  const auto means = class_means(sample_real(real, n, 2));
  for (std::size_t c = 0; c < w.num_classes; ++c) {
    double sq = 0;
    for (std::size_t i = 0; i < w.dim; ++i) sq += std::pow(means(c, i) - f.prototypes(c, i), 2);
    EXPECT_LT(std::sqrt(sq / w.dim), 4 * w.noise_scale / std::sqrt(double(n)));
  }
}

TEST(Synth, HeavyTailWidensSpread) {
  Fixture f;
  WorldParams plain = f.world;
  plain.heavy_tail_mix = 0.0;
  const auto narrow = sample_real(make_real_source("r", plain, f.prototypes, 1), 300, 1);
  const auto wide = sample_real(make_real_source("r", f.world, f.prototypes, 1), 300, 1);
  auto spread = [&](const LabeledDataset& d) {
    double sq = 0;
    for (std::size_t r = 0; r < d.size(); ++r)
      for (std::size_t i = 0; i < d.dim(); ++i) sq += std::pow(d.features(r, i) - f.prototypes(d.labels[r], i), 2);
    return sq / double(d.features.size());
  };
  const double s2 = f.world.noise_scale * f.world.noise_scale;
  EXPECT_NEAR(spread(narrow), s2, 0.05 * s2);
  const double mixed = (1 - f.world.heavy_tail_mix) * s2 + f.world.heavy_tail_mix * 9 * s2;
  EXPECT_NEAR(spread(wide), mixed, 0.1 * mixed);
}

TEST(Synth, TransformWellConditioned) {
  WorldParams w;
  const auto protos = make_prototypes(w);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto gen = make_generator("g", w, protos, seed);
    Eigen::MatrixXd a(w.dim, w.dim);
    for (std::size_t i = 0; i < w.dim; ++i)
      for (std::size_t j = 0; j < w.dim; ++j) a(i, j) = gen.transform(i, j);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    const auto s = svd.singularValues();
    EXPECT_LE(s(0) / s(s.size() - 1), 10.0) << seed;
  }
}

TEST(Synth, RotationIsOrthogonal) {
  const auto r = random_rotation(7, 42);
  Eigen::MatrixXd m(7, 7);
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) m(i, j) = r(i, j);
  EXPECT_NEAR((m.transpose() * m - Eigen::MatrixXd::Identity(7, 7)).norm(), 0.0, 1e-12);
  EXPECT_NEAR(m.determinant(), 1.0, 1e-12);
}

TEST(Synth, PrototypesDistinctOnSphere) {
  WorldParams w;
  const auto p = make_prototypes(w);
  for (std::size_t a = 0; a < w.num_classes; ++a) {
    double norm = 0;
    for (double x : p.row(a)) norm += x * x;
    EXPECT_NEAR(std::sqrt(norm), w.prototype_radius, 1e-12);
    for (std::size_t b = a + 1; b < w.num_classes; ++b) {
      double sq = 0;
      for (std::size_t i = 0; i < w.dim; ++i) sq += std::pow(p(a, i) - p(b, i), 2);
      EXPECT_GT(sq, 0.0);
    }
  }
}

TEST(Synth, SpecMismatchIsReported) {
  Fixture f;
  const auto wrong = make_prompt("p", f.world.num_classes, f.world.dim + 1, 0.2, 1);
  try {
    sample_synthetic(f.gen, wrong, 2, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSpecMismatch);
  }
}

TEST(Mix, CountsAndPermutation) {
  Fixture f;
  const auto a = sample_synthetic(f.gen, f.prompt, 10, 1);
  const auto real = sample_real(make_real_source("real", f.world, f.prototypes, 1), 5, 2);
  const auto m = mix_datasets(a, real, 3);
  EXPECT_EQ(m.size(), a.size() + real.size());
  const auto ca = a.class_counts();
  const auto cr = real.class_counts();
  const auto cm = m.class_counts();
  for (std::size_t c = 0; c < cm.size(); ++c) EXPECT_EQ(cm[c], ca[c] + cr[c]);
  EXPECT_NE(m.source_tag.find(a.source_tag), std::string::npos);
  EXPECT_NE(m.source_tag.find(real.source_tag), std::string::npos);

  LabeledDataset empty;
  empty.num_classes = a.num_classes;
  empty.features = Matrix(0, a.dim());
  const auto same = mix_datasets(a, empty, 4);
  std::multiset<std::vector<double>> rows_a;
  std::multiset<std::vector<double>> rows_m;
  for (std::size_t r = 0; r < a.size(); ++r) {
    auto row = std::vector<double>(a.features.row(r).begin(), a.features.row(r).end());
    row.push_back(a.labels[r]);
    rows_a.insert(row);
    auto mrow = std::vector<double>(same.features.row(r).begin(), same.features.row(r).end());
    mrow.push_back(same.labels[r]);
    rows_m.insert(mrow);
  }
  EXPECT_EQ(rows_a, rows_m);
}

TEST(Mix, ShapeMismatch) {
  Fixture f;
  const auto a = sample_synthetic(f.gen, f.prompt, 2, 1);
  LabeledDataset other;
  other.num_classes = a.num_classes;
  other.features = Matrix(0, a.dim() + 1);
  EXPECT_THROW(mix_datasets(a, other, 1), Error);
}

TEST(Gap, IdentityAndTranslation) {
  Fixture f;
  const auto a = sample_synthetic(f.gen, f.prompt, 20, 1);
  EXPECT_EQ(distribution_gap(a, a), 0.0);
  auto b = a;
  for (double& x : b.features.values()) x += 0.5;
  EXPECT_NEAR(distribution_gap(a, b), 0.5 * std::sqrt(double(a.dim())), 1e-12);
}

TEST(Gap, MissingClass) {
  Fixture f;
  const auto a = sample_synthetic(f.gen, f.prompt, 3, 1);
  LabeledDataset b = a;
  for (auto& y : b.labels) y = y == 2 ? 1 : y;
  try {
    distribution_gap(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingClass);
  }
}

// Same generator under a different prompt sits closer to the target than a
// different generator or the real source, averaged over seeds.
TEST(Gap, DistanceStructure) {
  WorldParams w;
  const auto protos = make_prototypes(w);
  double same = 0, cross = 0, real = 0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    const auto g = make_generator("g", w, protos, derive_seed(1, {std::uint64_t(s)}));
    const auto g2 = make_generator("g2", w, protos, derive_seed(2, {std::uint64_t(s)}));
    const auto t1 = make_prompt("t1", w.num_classes, w.dim, 0.2, 10 + s);
    const auto t2 = make_prompt("t2", w.num_classes, w.dim, 0.2, 100 + s);
    const auto tt = make_prompt("tt", w.num_classes, w.dim, 0.2, 1000 + s);
    const auto target = sample_synthetic(g, tt, 200, s);
    same += distribution_gap(sample_synthetic(g, t1, 200, s + 1), target);
    cross += distribution_gap(sample_synthetic(g2, t2, 200, s + 2), target);
    real += distribution_gap(sample_real(make_real_source("r", w, protos, s), 200, s + 3), target);
  }
  EXPECT_LT(same / seeds, cross / seeds);
  EXPECT_LT(same / seeds, real / seeds);
}

TEST(DatasetCsv, RoundTrip) {
  Fixture f;
  const auto a = sample_synthetic(f.gen, f.prompt, 7, 1);
  const auto path = std::filesystem::temp_directory_path() / "dataprov_roundtrip.csv";
  write_dataset_csv(path, a);
  const auto b = read_dataset_csv(path);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.num_classes, b.num_classes);
  std::filesystem::remove(path);
}

TEST(DatasetCsv, RejectsMalformed) {
  const auto path = std::filesystem::temp_directory_path() / "dataprov_bad.csv";
  {
    std::ofstream out(path);
    out << "3,2,2\n0,1.0,2.0\n5,1.0,2.0\n";
  }
  EXPECT_THROW(read_dataset_csv(path), Error);
  {
    std::ofstream out(path);
    out << "3,2,2\n0,1.0,2.0\n";
  }
  EXPECT_THROW(read_dataset_csv(path), Error);
  std::filesystem::remove(path);
}
