#include "dataprov/verifier.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "dataprov/error.hpp"
#include "dataprov/seed.hpp"
#include "json_io.hpp"

namespace dataprov::verifier {
namespace {

constexpr std::size_t kVariantCount = 3;

std::size_t variant_index(Variant v) { return static_cast<std::size_t>(v); }

double batch_accuracy(const blackbox::PredictResponse& response, std::span<const std::uint32_t> truth) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += response.labels[i] == truth[i];
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

double batch_entropy(const Matrix& logits) {
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) total += stats::shannon_entropy(logits.row(r));
  return total / static_cast<double>(logits.rows());
}

// Mean cosine similarity over every same-class pair in the batch; false when
// there is no such pair.
bool batch_similarity(const Matrix& logits, std::span<const std::uint32_t> truth, double& out) {
  std::map<std::uint32_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < truth.size(); ++i) groups[truth[i]].push_back(i);
  double total = 0.0;
  std::size_t pairs = 0;
  for (const auto& [label, members] : groups) {
    for (std::size_t a = 0; a < members.size(); ++a) {
      for (std::size_t b = a + 1; b < members.size(); ++b) {
        total += stats::cosine_similarity(logits.row(members[a]), logits.row(members[b]));
        ++pairs;
      }
    }
  }
  if (pairs == 0) return false;
  out = total / static_cast<double>(pairs);
  return true;
}

}  // namespace

std::string_view to_string(Variant variant) noexcept {
  switch (variant) {
    case Variant::kAccuracy: return "accuracy";
    case Variant::kEntropy: return "entropy";
    case Variant::kSimilarity: return "similarity";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  if (name == "accuracy") return Variant::kAccuracy;
  if (name == "entropy") return Variant::kEntropy;
  if (name == "similarity") return Variant::kSimilarity;
  throw Error(ErrorCode::kInvalidConfig, "unknown variant '" + std::string(name) + "'");
}

stats::Tail test_direction(Variant variant) noexcept {
  return variant == Variant::kEntropy ? stats::Tail::kHigh : stats::Tail::kLow;
}

bool needs_logits(Variant variant) noexcept { return variant != Variant::kAccuracy; }

std::string_view to_string(Verdict verdict) noexcept {
  return verdict == Verdict::kIllegal ? "illegal" : "legal";
}

Verdict parse_verdict(std::string_view name) {
  if (name == "illegal") return Verdict::kIllegal;
  if (name == "legal") return Verdict::kLegal;
  throw Error(ErrorCode::kParse, "unknown verdict '" + std::string(name) + "'");
}

synth::PromptSpec PromptParams::build(std::size_t num_classes, std::size_t dim) const {
  return synth::make_prompt(id, num_classes, dim, shift_scale, seed);
}

void VerificationConfig::validate(std::size_t num_classes) const {
  if (shadow_n_per_class == 0 || val_n_per_class == 0) {
    throw Error(ErrorCode::kInvalidConfig, "shadow and validation sets need at least one item per class");
  }
  if (inference_batch_size == 0) throw Error(ErrorCode::kInvalidConfig, "inference batch size must be >= 1");
  stats::SignificanceConfig{alpha}.validate();
  shadow_train.validate();
  if (shadow_prompt == validation_prompt) {
    throw Error(ErrorCode::kInvalidConfig, "shadow and validation prompts must differ");
  }
  if (needs_logits(variant) && !logit_access) {
    throw Error(ErrorCode::kInvalidConfig,
                std::string(to_string(variant)) + " variant needs logit access to the suspect");
  }
  if (batch_count(num_classes) < 3) {
    throw Error(ErrorCode::kInsufficientBatches, "validation set yields fewer than 3 batches");
  }
}

std::size_t VerificationConfig::batch_count(std::size_t num_classes) const {
  const std::size_t items = val_n_per_class * num_classes;
  return (items + inference_batch_size - 1) / inference_batch_size;
}

AccuracySeries batch_statistics(const std::vector<blackbox::PredictResponse>& responses,
                                std::span<const std::uint32_t> truth, std::size_t batch_size,
                                Variant variant, std::vector<std::string>* warnings) {
  const auto ranges = blackbox::batch_ranges(truth.size(), batch_size);
  if (responses.size() != ranges.size()) {
    throw Error(ErrorCode::kDimensionMismatch, std::to_string(responses.size()) + " responses for " +
                                                   std::to_string(ranges.size()) + " batches");
  }
  AccuracySeries series;
  series.batch_size = batch_size;
  series.item_count = truth.size();
  for (std::size_t b = 0; b < ranges.size(); ++b) {
    const auto& response = responses[b];
    const auto batch_truth = truth.subspan(ranges[b].begin, ranges[b].size());
    if (response.labels.size() != batch_truth.size()) {
      throw Error(ErrorCode::kDimensionMismatch, "batch " + std::to_string(b) + " response has the wrong size");
    }
    if (variant == Variant::kAccuracy) {
      series.values.push_back(batch_accuracy(response, batch_truth));
      continue;
    }
    if (!response.logits) {
      throw Error(ErrorCode::kInvalidConfig, std::string(to_string(variant)) + " variant needs logits");
    }
    if (variant == Variant::kEntropy) {
      series.values.push_back(batch_entropy(*response.logits));
      continue;
    }
    double value = 0.0;
    if (batch_similarity(*response.logits, batch_truth, value)) {
      series.values.push_back(value);
    } else {
      series.skipped_batches.push_back(b);
      if (warnings) warnings->push_back("batch " + std::to_string(b) + " has no same-class pair; skipped");
    }
  }
  return series;
}

VerificationReport decide(const AccuracySeries& shadow, const AccuracySeries& suspect, Variant variant,
                          double alpha) {
  if (suspect.values.empty()) throw Error(ErrorCode::kEmptyInput, "suspect series is empty");
  VerificationReport report;
  report.variant = variant;
  report.shadow_series = shadow;
  report.suspect_series = suspect;
  report.shadow_mean = stats::mean(shadow.values);
  report.suspect_mean = stats::mean(suspect.values);
  const stats::SignificanceConfig significance{alpha};
  const stats::Tail direction = test_direction(variant);
  try {
    report.grubbs = stats::grubbs_one_sided(shadow.values, report.suspect_mean, direction, significance);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kZeroVariance) throw;
    constexpr double inf = std::numeric_limits<double>::infinity();
    const double gap = direction == stats::Tail::kLow ? report.shadow_mean - report.suspect_mean
                                                      : report.suspect_mean - report.shadow_mean;
    report.zero_variance = true;
    report.grubbs.n = shadow.values.size();
    report.grubbs.direction = direction;
    report.grubbs.g0 = stats::grubbs_critical(shadow.values.size(), significance);
    report.grubbs.g = gap > 0.0 ? inf : (gap < 0.0 ? -inf : 0.0);
    report.grubbs.is_outlier = report.grubbs.g > report.grubbs.g0;
    report.warnings.push_back("shadow series has zero variance; verdict taken from the side of the suspect mean");
  }
  report.verdict = report.grubbs.is_outlier ? Verdict::kLegal : Verdict::kIllegal;
  report.illegality_score = -report.grubbs.g;
  return report;
}

ShadowReference::ShadowReference(const synth::GeneratorSpec& defender, const VerificationConfig& config,
                                 std::uint64_t seed)
    : config_(config), defender_id_(defender.id), seed_(seed) {
  defender.validate();
  config_.validate(defender.num_classes);
  const auto shadow_prompt = config_.shadow_prompt.build(defender.num_classes, defender.dim);
  const auto validation_prompt = config_.validation_prompt.build(defender.num_classes, defender.dim);
  shadow_data_ = synth::sample_synthetic(defender, shadow_prompt, config_.shadow_n_per_class, derive_seed(seed, {1}));
  validation_data_ =
      synth::sample_synthetic(defender, validation_prompt, config_.val_n_per_class, derive_seed(seed, {2}));

  learner::MlpClassifier init(defender.dim, config_.shadow_hidden_width, defender.num_classes, derive_seed(seed, {3}));
  learner::TrainConfig train_config = config_.shadow_train;
  train_config.shuffle_seed = derive_seed(seed, {4});
  shadow_model_ =
      std::make_shared<const learner::MlpClassifier>(learner::train(std::move(init), shadow_data_, train_config).first);

  // The defender owns the shadow model, so it is queried in-process, with
  // exactly the batch partition the suspect will see.
  blackbox::InProcessService service(shadow_model_);
  const auto responses = blackbox::query_batches(service, validation_data_.features, config_.inference_batch_size,
                                                 blackbox::PredictMode::kLogits);
  series_.resize(kVariantCount);
  warnings_.resize(kVariantCount);
  for (Variant v : {Variant::kAccuracy, Variant::kEntropy, Variant::kSimilarity}) {
    series_[variant_index(v)] = batch_statistics(responses, validation_data_.labels, config_.inference_batch_size, v,
                                                 &warnings_[variant_index(v)]);
  }
}

const AccuracySeries& ShadowReference::series(Variant variant) const { return series_[variant_index(variant)]; }

const std::vector<std::string>& ShadowReference::warnings(Variant variant) const {
  return warnings_[variant_index(variant)];
}

blackbox::PredictMode ShadowReference::query_mode(std::span<const Variant> variants) const {
  for (Variant v : variants) {
    if (!needs_logits(v)) continue;
    if (!config_.logit_access) {
      throw Error(ErrorCode::kInvalidConfig, std::string(to_string(v)) + " variant needs logit access to the suspect");
    }
    return blackbox::PredictMode::kLogits;
  }
  return blackbox::PredictMode::kLabels;
}

VerificationReport ShadowReference::assess(blackbox::PredictionService& suspect, Variant variant) const {
  const Variant one[] = {variant};
  const auto responses = blackbox::query_batches(suspect, validation_data_.features, config_.inference_batch_size,
                                                 query_mode(one));
  return assess_responses(responses, variant);
}

VerificationReport ShadowReference::assess_responses(const std::vector<blackbox::PredictResponse>& responses,
                                                     Variant variant) const {
  std::vector<std::string> suspect_warnings;
  const AccuracySeries suspect =
      batch_statistics(responses, validation_data_.labels, config_.inference_batch_size, variant, &suspect_warnings);
  VerificationReport report = decide(series(variant), suspect, variant, config_.alpha);
  report.defender_id = defender_id_;
  report.seed = seed_;
  report.config = config_;
  report.config.variant = variant;
  const auto& shadow_warnings = warnings(variant);
  report.warnings.insert(report.warnings.begin(), shadow_warnings.begin(), shadow_warnings.end());
  return report;
}

VerificationReport verify(const synth::GeneratorSpec& defender, blackbox::PredictionService& suspect,
                          const VerificationConfig& config, std::uint64_t seed) {
  const ShadowReference reference(defender, config, seed);
  return reference.assess(suspect, config.variant);
}

Verdict random_verify(std::uint64_t seed) noexcept {
  return (splitmix64(seed) >> 63) != 0 ? Verdict::kIllegal : Verdict::kLegal;
}

std::string report_to_json(const VerificationReport& report) {
  using nlohmann::json;
  auto finite_or_null = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json j;
  j["verdict"] = to_string(report.verdict);
  j["variant"] = to_string(report.variant);
  j["defender"] = report.defender_id;
  j["seed"] = report.seed;
  j["g"] = finite_or_null(report.grubbs.g);
  j["g0"] = report.grubbs.g0;
  j["n"] = report.grubbs.n;
  j["alpha"] = report.config.alpha;
  j["direction"] = report.grubbs.direction == stats::Tail::kLow ? "low" : "high";
  j["is_outlier"] = report.grubbs.is_outlier;
  j["illegality_score"] = finite_or_null(report.illegality_score);
  j["shadow_mean"] = report.shadow_mean;
  j["suspect_mean"] = report.suspect_mean;
  j["shadow_series"] = report.shadow_series.values;
  j["suspect_series"] = report.suspect_series.values;
  j["batch_size"] = report.suspect_series.batch_size;
  j["item_count"] = report.suspect_series.item_count;
  j["skipped_batches"] = report.suspect_series.skipped_batches;
  j["zero_variance"] = report.zero_variance;
  j["warnings"] = report.warnings;
  j["config"] = detail::to_json(report.config);
  return j.dump(2);
}

}  // namespace dataprov::verifier
