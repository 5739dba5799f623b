#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dataprov/blackbox.hpp"
#include "dataprov/mlp.hpp"
#include "dataprov/stats.hpp"
#include "dataprov/synth.hpp"

namespace dataprov::verifier {

// Accuracy: per-batch accuracy, low-outlier test.
// Entropy: per-batch mean prediction entropy, high-outlier test.
// Similarity: per-batch within-class cosine similarity of logits, low-outlier test.
enum class Variant { kAccuracy, kEntropy, kSimilarity };

std::string_view to_string(Variant variant) noexcept;
Variant parse_variant(std::string_view name);
stats::Tail test_direction(Variant variant) noexcept;
bool needs_logits(Variant variant) noexcept;

enum class Verdict { kIllegal, kLegal };

std::string_view to_string(Verdict verdict) noexcept;
Verdict parse_verdict(std::string_view name);

struct PromptParams {
  std::string id;
  double shift_scale = 0.2;
  std::uint64_t seed = 0;

  synth::PromptSpec build(std::size_t num_classes, std::size_t dim) const;
  friend bool operator==(const PromptParams&, const PromptParams&) = default;
};

struct VerificationConfig {
  std::size_t shadow_n_per_class = 500;
  std::size_t val_n_per_class = 100;
  std::size_t inference_batch_size = 50;
  double alpha = 0.05;
  Variant variant = Variant::kAccuracy;
  // Whether the suspect's endpoint may be asked for logits. The entropy and
  // similarity variants cannot run without it.
  bool logit_access = true;
  std::size_t shadow_hidden_width = 64;
  learner::TrainConfig shadow_train{.epochs = 12, .batch_size = 32, .learning_rate = 0.05,
                                    .weight_decay = 1e-3, .loss = {}, .shuffle_seed = 0};
  PromptParams shadow_prompt{"shadow", 0.2, 11};
  PromptParams validation_prompt{"validation", 0.2, 23};

  void validate(std::size_t num_classes) const;
  std::size_t batch_count(std::size_t num_classes) const;
};

// Per-batch statistic of one model on the validation set.
struct AccuracySeries {
  std::vector<double> values;
  std::size_t batch_size = 0;
  std::size_t item_count = 0;
  std::vector<std::size_t> skipped_batches;  // similarity batches with no same-class pair
};

/// Reduces per-batch responses to the series a variant tests. Similarity
/// groups logits by the ground-truth label; batches without any same-class
/// pair are skipped and reported through `warnings`.
AccuracySeries batch_statistics(const std::vector<blackbox::PredictResponse>& responses,
                                std::span<const std::uint32_t> truth, std::size_t batch_size,
                                Variant variant, std::vector<std::string>* warnings = nullptr);

struct VerificationReport {
  Verdict verdict = Verdict::kIllegal;
  Variant variant = Variant::kAccuracy;
  stats::GrubbsResult grubbs;
  double illegality_score = 0.0;  // -G
  AccuracySeries shadow_series;
  AccuracySeries suspect_series;
  double shadow_mean = 0.0;
  double suspect_mean = 0.0;
  bool zero_variance = false;
  std::string defender_id;
  std::uint64_t seed = 0;
  VerificationConfig config;
  std::vector<std::string> warnings;
};

/// Applies the decision rule to a reference series and a suspect series.
/// A zero-variance reference gives G = +-inf: Legal (with a warning) when the
/// suspect lies on the tested side of the reference, Illegal otherwise.
VerificationReport decide(const AccuracySeries& shadow, const AccuracySeries& suspect, Variant variant,
                          double alpha);

// Everything the defender prepares once per (generator, seed): shadow and
// validation data, the trained shadow model, and its series for every variant.
class ShadowReference {
 public:
  ShadowReference(const synth::GeneratorSpec& defender, const VerificationConfig& config, std::uint64_t seed);

  const VerificationConfig& config() const noexcept { return config_; }
  const std::string& defender_id() const noexcept { return defender_id_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const synth::LabeledDataset& shadow_data() const noexcept { return shadow_data_; }
  const synth::LabeledDataset& validation_data() const noexcept { return validation_data_; }
  std::shared_ptr<const learner::MlpClassifier> shadow_model() const noexcept { return shadow_model_; }
  const AccuracySeries& series(Variant variant) const;
  const std::vector<std::string>& warnings(Variant variant) const;

  blackbox::PredictMode query_mode(std::span<const Variant> variants) const;

  /// Queries the suspect on the validation set and decides.
  VerificationReport assess(blackbox::PredictionService& suspect, Variant variant) const;

  /// Decides from responses already collected on validation_data() with
  /// the configured batch size.
  VerificationReport assess_responses(const std::vector<blackbox::PredictResponse>& responses,
                                      Variant variant) const;

 private:
  VerificationConfig config_;
  std::string defender_id_;
  std::uint64_t seed_;
  synth::LabeledDataset shadow_data_;
  synth::LabeledDataset validation_data_;
  std::shared_ptr<const learner::MlpClassifier> shadow_model_;
  std::vector<AccuracySeries> series_;                // indexed by Variant
  std::vector<std::vector<std::string>> warnings_;    // indexed by Variant
};

/// One verification end to end: build the shadow reference for `defender`
/// and test `suspect` with config.variant.
VerificationReport verify(const synth::GeneratorSpec& defender, blackbox::PredictionService& suspect,
                          const VerificationConfig& config, std::uint64_t seed);

/// Coin-flip baseline.
Verdict random_verify(std::uint64_t seed) noexcept;

/// JSON with fields: verdict, variant, defender, seed, g, g0, n, alpha,
/// direction, is_outlier, illegality_score, shadow_mean, suspect_mean,
/// shadow_series, suspect_series, batch_size, item_count, skipped_batches,
/// zero_variance, warnings, config. Infinite G is written as null.
std::string report_to_json(const VerificationReport& report);

}  // namespace dataprov::verifier
