#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include <json.hpp>

#include "dataprov/error.hpp"
#include "dataprov/seed.hpp"
#include "dataprov/verifier.hpp"

using namespace dataprov;
using namespace dataprov::verifier;

namespace {

struct Scene {
  synth::GeneratorSpec defender;
  synth::GeneratorSpec other;
};

Scene make_scene(std::uint64_t seed) {
  synth::WorldParams w;
  const auto protos = synth::make_prototypes(w);
  return {synth::make_generator("defender", w, protos, derive_seed(seed, {1})),
          synth::make_generator("other", w, protos, derive_seed(seed, {2}))};
}

std::shared_ptr<const learner::MlpClassifier> train_suspect(const synth::GeneratorSpec& gen, std::uint64_t seed) {
  const auto prompt = synth::make_prompt("third", gen.num_classes, gen.dim, 0.2, derive_seed(seed, {3}));
  const auto data = synth::sample_synthetic(gen, prompt, 300, derive_seed(seed, {4}));
  learner::TrainConfig tc;
  tc.epochs = 10;
  tc.shuffle_seed = derive_seed(seed, {5});
  auto trained = learner::train(learner::MlpClassifier(gen.dim, 32, gen.num_classes, derive_seed(seed, {6})), data, tc);
  return std::make_shared<const learner::MlpClassifier>(std::move(trained.first));
}

blackbox::PredictResponse labels_only(std::vector<std::uint32_t> labels) { return {std::move(labels), std::nullopt}; }

AccuracySeries series_of(std::vector<double> values) {
  AccuracySeries s;
  s.values = std::move(values);
  s.batch_size = 50;
  s.item_count = 50 * s.values.size();
  return s;
}

const std::vector<double> kShadow{0.90, 0.92, 0.88, 0.91, 0.89, 0.90, 0.93, 0.87, 0.90, 0.90};

}  // namespace

TEST(BatchStatistics, AccuracyPerBatchWithShortTail) {
  std::vector<std::uint32_t> truth(260);
  for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = i % 3;
  std::vector<blackbox::PredictResponse> responses;
  for (std::size_t b = 0; b < 6; ++b) {
    const std::size_t n = b < 5 ? 50 : 10;
    std::vector<std::uint32_t> labels(truth.begin() + b * 50, truth.begin() + b * 50 + n);
    for (std::size_t i = 0; i < b * 2 && i < n; ++i) labels[i] = (labels[i] + 1) % 3;
    responses.push_back(labels_only(labels));
  }
  const auto s = batch_statistics(responses, truth, 50, Variant::kAccuracy);
  ASSERT_EQ(s.values.size(), 6u);
  EXPECT_EQ(s.item_count, 260u);
  EXPECT_DOUBLE_EQ(s.values[0], 1.0);
  EXPECT_DOUBLE_EQ(s.values[1], 48.0 / 50);
  EXPECT_DOUBLE_EQ(s.values[4], 42.0 / 50);
  EXPECT_DOUBLE_EQ(s.values[5], 0.0);
}

TEST(BatchStatistics, SimilarityOfIdenticalLogitsIsOne) {
  const std::vector<std::uint32_t> truth{0, 0, 1, 1, 1, 2};
  Matrix logits(6, 3);
  for (std::size_t r = 0; r < 6; ++r) {
    logits(r, 0) = 1.0 + truth[r];
    logits(r, 1) = -2.0;
    logits(r, 2) = 0.5 * truth[r];
  }
  const std::vector<blackbox::PredictResponse> responses{{learner::argmax_rows(logits), logits}};
  const auto s = batch_statistics(responses, truth, 6, Variant::kSimilarity);
  ASSERT_EQ(s.values.size(), 1u);
  EXPECT_NEAR(s.values[0], 1.0, 1e-15);
}

TEST(BatchStatistics, SimilarityPoolsPairsAcrossClasses) {
  // Class 0 pair: cosine 0.8. Class 1 triple: cosines 1, 0, 0. Pooled mean = 1.8 / 4.
  const std::vector<std::uint32_t> truth{0, 0, 1, 1, 1};
  Matrix logits(5, 2);
  logits(0, 0) = 1, logits(0, 1) = 2;
  logits(1, 0) = 2, logits(1, 1) = 1;
  logits(2, 0) = 1, logits(2, 1) = 0;
  logits(3, 0) = 3, logits(3, 1) = 0;
  logits(4, 0) = 0, logits(4, 1) = 1;
  const std::vector<blackbox::PredictResponse> responses{{learner::argmax_rows(logits), logits}};
  EXPECT_NEAR(batch_statistics(responses, truth, 5, Variant::kSimilarity).values[0], 1.8 / 4, 1e-15);
}

TEST(BatchStatistics, SimilaritySkipsBatchesWithoutPairs) {
  const std::vector<std::uint32_t> truth{0, 1, 0, 0, 1, 1};
  Matrix logits(3, 2, 1.0);
  logits(1, 0) = -1;
  Matrix more(3, 2, 0.5);
  std::vector<blackbox::PredictResponse> responses{{{0, 0, 0}, logits}, {{0, 0, 0}, more}};
  // First batch {0,1,0} has a pair; second {0,1,1} too. Make the first pairless.
  const std::vector<std::uint32_t> pairless{0, 1, 2, 0, 1, 1};
  std::vector<std::string> warnings;
  const auto s = batch_statistics(responses, pairless, 3, Variant::kSimilarity, &warnings);
  EXPECT_EQ(s.values.size(), 1u);
  EXPECT_EQ(s.skipped_batches, std::vector<std::size_t>{0});
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_EQ(batch_statistics(responses, truth, 3, Variant::kSimilarity).values.size(), 2u);
}

TEST(BatchStatistics, EntropyNeedsLogitsAndSizesMustMatch) {
  const std::vector<std::uint32_t> truth{0, 1, 0, 1};
  const std::vector<blackbox::PredictResponse> responses{labels_only({0, 1}), labels_only({0, 1})};
  EXPECT_THROW(batch_statistics(responses, truth, 2, Variant::kEntropy), Error);
  EXPECT_THROW(batch_statistics(responses, truth, 3, Variant::kAccuracy), Error);
  Matrix flat(2, 4);
  const std::vector<blackbox::PredictResponse> uniform{{{0, 0}, flat}, {{0, 0}, flat}};
  const auto s = batch_statistics(uniform, truth, 2, Variant::kEntropy);
  EXPECT_NEAR(s.values[0], std::log(4.0), 1e-15);
}

TEST(Decide, LowAccuracyIsLegal) {
  const auto r = decide(series_of(kShadow), series_of({0.6, 0.6, 0.6}), Variant::kAccuracy, 0.05);
  EXPECT_EQ(r.verdict, Verdict::kLegal);
  EXPECT_NEAR(r.grubbs.g, 17.0, 0.05);
  EXPECT_DOUBLE_EQ(r.illegality_score, -r.grubbs.g);
  const auto close = decide(series_of(kShadow), series_of({0.89}), Variant::kAccuracy, 0.05);
  EXPECT_EQ(close.verdict, Verdict::kIllegal);
  // A suspect that beats the shadow is never an outlier on the low side.
  EXPECT_EQ(decide(series_of(kShadow), series_of({1.0}), Variant::kAccuracy, 0.05).verdict, Verdict::kIllegal);
}

TEST(Decide, BatchOrderDoesNotMatter) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z(0.85, 0.03);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> shadow(20), suspect(20);
    for (auto& v : shadow) v = z(rng);
    for (auto& v : suspect) v = z(rng) - 0.05;
    const auto base = decide(series_of(shadow), series_of(suspect), Variant::kAccuracy, 0.05);
    std::shuffle(shadow.begin(), shadow.end(), rng);
    std::shuffle(suspect.begin(), suspect.end(), rng);
    const auto permuted = decide(series_of(shadow), series_of(suspect), Variant::kAccuracy, 0.05);
    EXPECT_NEAR(base.grubbs.g, permuted.grubbs.g, 1e-9);
    EXPECT_EQ(base.verdict, permuted.verdict);
  }
}

TEST(Decide, EntropyIsTheNegatedLowTest) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> z(0.5, 0.1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> shadow(15), suspect(15), neg_shadow(15), neg_suspect(15);
    for (std::size_t i = 0; i < 15; ++i) {
      shadow[i] = z(rng);
      suspect[i] = z(rng) + 0.1;
      neg_shadow[i] = -shadow[i];
      neg_suspect[i] = -suspect[i];
    }
    const auto high = decide(series_of(shadow), series_of(suspect), Variant::kEntropy, 0.05);
    const auto low = decide(series_of(neg_shadow), series_of(neg_suspect), Variant::kAccuracy, 0.05);
    EXPECT_NEAR(high.grubbs.g, low.grubbs.g, 1e-9);
    EXPECT_EQ(high.verdict, low.verdict);
    EXPECT_EQ(high.grubbs.direction, stats::Tail::kHigh);
  }
}

TEST(Decide, ZeroVarianceShadow) {
  const auto flat = series_of(std::vector<double>(10, 1.0));
  const auto lower = decide(flat, series_of({0.9}), Variant::kAccuracy, 0.05);
  EXPECT_TRUE(lower.zero_variance);
  EXPECT_EQ(lower.verdict, Verdict::kLegal);
  EXPECT_TRUE(std::isinf(lower.grubbs.g) && lower.grubbs.g > 0);
  EXPECT_FALSE(lower.warnings.empty());
  const auto equal = decide(flat, series_of({1.0, 1.0}), Variant::kAccuracy, 0.05);
  EXPECT_EQ(equal.verdict, Verdict::kIllegal);
  EXPECT_EQ(equal.grubbs.g, 0.0);
  const auto entropy_lower = decide(flat, series_of({0.9}), Variant::kEntropy, 0.05);
  EXPECT_EQ(entropy_lower.verdict, Verdict::kIllegal);
  const auto j = nlohmann::json::parse(report_to_json(lower));
  EXPECT_TRUE(j["g"].is_null());
  EXPECT_TRUE(j["zero_variance"].get<bool>());
}

TEST(Decide, Errors) {
  EXPECT_THROW(decide(series_of(kShadow), series_of({}), Variant::kAccuracy, 0.05), Error);
  EXPECT_THROW(decide(series_of({0.9, 0.8}), series_of({0.5}), Variant::kAccuracy, 0.05), Error);
  EXPECT_THROW(decide(series_of(kShadow), series_of({0.5}), Variant::kAccuracy, 1.5), Error);
}

TEST(Config, Validation) {
  VerificationConfig c;
  EXPECT_NO_THROW(c.validate(10));
  EXPECT_EQ(c.batch_count(10), 20u);
  auto bad = c;
  bad.validation_prompt = bad.shadow_prompt;
  EXPECT_THROW(bad.validate(10), Error);
  bad = c;
  bad.variant = Variant::kEntropy;
  bad.logit_access = false;
  EXPECT_THROW(bad.validate(10), Error);
  bad = c;
  bad.inference_batch_size = 500;
  try {
    bad.validate(10);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientBatches);
  }
}

TEST(Names, RoundTrip) {
  for (Variant v : {Variant::kAccuracy, Variant::kEntropy, Variant::kSimilarity}) EXPECT_EQ(parse_variant(to_string(v)), v);
  for (Verdict v : {Verdict::kIllegal, Verdict::kLegal}) EXPECT_EQ(parse_verdict(to_string(v)), v);
  EXPECT_THROW(parse_variant("ent"), Error);
  EXPECT_FALSE(needs_logits(Variant::kAccuracy));
  EXPECT_TRUE(needs_logits(Variant::kSimilarity));
}

TEST(RandomBaseline, DeterministicAndFair) {
  std::size_t illegal = 0;
  for (std::uint64_t s = 0; s < 10000; ++s) {
    EXPECT_EQ(random_verify(s), random_verify(s));
    illegal += random_verify(s) == Verdict::kIllegal;
  }
  EXPECT_NEAR(illegal / 10000.0, 0.5, 0.05);
}

TEST(Verify, ShadowAgainstItselfIsIllegal) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto scene = make_scene(seed);
    const ShadowReference ref(scene.defender, {}, seed);
    blackbox::InProcessService self(ref.shadow_model());
    for (Variant v : {Variant::kAccuracy, Variant::kEntropy, Variant::kSimilarity}) {
      const auto r = ref.assess(self, v);
      EXPECT_EQ(r.verdict, Verdict::kIllegal) << seed;
      EXPECT_NEAR(r.grubbs.g, 0.0, 1e-9);
      EXPECT_EQ(r.suspect_series.values, ref.series(v).values);
    }
  }
}

TEST(Verify, ConstantLabelModelIsLegal) {
  const auto scene = make_scene(3);
  auto constant = std::make_shared<learner::MlpClassifier>(scene.defender.dim, 0, scene.defender.num_classes, 1);
  constant->zero_parameters();
  blackbox::InProcessService service(constant);
  const auto r = verify(scene.defender, service, {}, 3);
  EXPECT_EQ(r.verdict, Verdict::kLegal);
  EXPECT_NEAR(r.suspect_mean, 0.1, 1e-12);
  EXPECT_EQ(r.defender_id, "defender");
}

TEST(Verify, SourceDecidesTheVerdict) {
  int same_illegal = 0;
  int other_legal = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto scene = make_scene(100 + seed);
    const ShadowReference ref(scene.defender, {}, seed);
    blackbox::InProcessService same(train_suspect(scene.defender, seed));
    blackbox::InProcessService other(train_suspect(scene.other, seed));
    same_illegal += ref.assess(same, Variant::kAccuracy).verdict == Verdict::kIllegal;
    other_legal += ref.assess(other, Variant::kAccuracy).verdict == Verdict::kLegal;
  }
  EXPECT_GE(same_illegal, 19);
  EXPECT_GE(other_legal, 19);
}

TEST(Verify, LabelsOnlyAccessRejectsLogitVariants) {
  const auto scene = make_scene(4);
  VerificationConfig c;
  c.logit_access = false;
  const ShadowReference ref(scene.defender, c, 4);
  const Variant both[] = {Variant::kAccuracy, Variant::kSimilarity};
  EXPECT_THROW(ref.query_mode(both), Error);
  const Variant acc[] = {Variant::kAccuracy};
  EXPECT_EQ(ref.query_mode(acc), blackbox::PredictMode::kLabels);
}

TEST(Report, JsonFields) {
  const auto scene = make_scene(5);
  const ShadowReference ref(scene.defender, {}, 5);
  blackbox::InProcessService self(ref.shadow_model());
  const auto j = nlohmann::json::parse(report_to_json(ref.assess(self, Variant::kEntropy)));
  for (const char* key : {"verdict", "variant", "defender", "seed", "g", "g0", "n", "alpha", "direction",
                          "is_outlier", "illegality_score", "shadow_mean", "suspect_mean", "shadow_series",
                          "suspect_series", "batch_size", "item_count", "skipped_batches", "zero_variance",
                          "warnings", "config"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["verdict"], "illegal");
  EXPECT_EQ(j["variant"], "entropy");
  EXPECT_EQ(j["direction"], "high");
  EXPECT_EQ(j["n"], 20);
  EXPECT_EQ(j["shadow_series"].size(), 20u);
}
