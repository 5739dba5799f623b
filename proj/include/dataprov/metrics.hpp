#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dataprov/verifier.hpp"

namespace dataprov::metrics {

// Illegal is the positive class.
struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const noexcept { return tp + fp + fn + tn; }
  void add(verifier::Verdict truth, verifier::Verdict verdict) noexcept;
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct AccuracyF1 {
  double accuracy = 0.0;
  double f1 = 0.0;
};

/// accuracy = (tp + tn) / total, f1 = 2tp / (2tp + fp + fn).
/// Throws kEmptyInput on zero total, kUndefinedF1 when 2tp + fp + fn == 0.
AccuracyF1 accuracy_f1(const ConfusionCounts& counts);

/// P(score of a random positive > score of a random negative), ties count 1/2.
/// Throws kOneClassOnly unless both classes occur.
double auroc(std::span<const double> scores, std::span<const char> is_positive);

// One scored decision.
struct Outcome {
  verifier::Verdict truth = verifier::Verdict::kIllegal;
  verifier::Verdict verdict = verifier::Verdict::kIllegal;
  double score = 0.0;  // higher means more likely Illegal
};

struct BlockSummary {
  ConfusionCounts counts;
  double accuracy = 0.0;
  double f1 = 0.0;
  double auroc = 0.0;  // NaN when the block holds only one truth class
};

/// Counts, accuracy, F1 and AUROC of one block of outcomes. F1 is NaN when
/// undefined rather than an error so that a block can still be reported.
BlockSummary aggregate(std::span<const Outcome> outcomes);

struct AverageRow {
  double tp = 0.0, fp = 0.0, fn = 0.0, tn = 0.0;
  double accuracy = 0.0, f1 = 0.0, auroc = 0.0;
};

/// Unweighted mean of the blocks' counts and metrics.
AverageRow average(std::span<const BlockSummary> blocks);

// ---------------------------------------------------------------------------
// Benchmark tables.

// One verification decision of the benchmark sweep. `variant` is one of
// accuracy, entropy, similarity, random.
struct CellRecord {
  std::string defender;
  std::string source;
  std::size_t replicate = 0;
  std::size_t suspect_index = 0;
  std::string variant;
  verifier::Verdict truth = verifier::Verdict::kIllegal;
  verifier::Verdict verdict = verifier::Verdict::kIllegal;
  double g = 0.0;
  double g0 = 0.0;
  double score = 0.0;
  double suspect_mean = 0.0;
  double shadow_mean = 0.0;
  std::string status = "ok";  // "ok", "zero_variance", or "failed: <reason>"

  bool failed() const noexcept { return status.rfind("failed", 0) == 0; }
};

struct SummaryRow {
  std::string defender;  // "average" for the cross-defender row
  std::string variant;
  double tp = 0.0, fp = 0.0, fn = 0.0, tn = 0.0;
  double accuracy = 0.0, f1 = 0.0, auroc = 0.0;
};

/// Per (defender, variant) blocks over all non-failed cells, in first-seen
/// order, followed by one average row per variant.
std::vector<SummaryRow> summarize(std::span<const CellRecord> cells);

// cells.csv header:
//   defender,source,replicate,suspect_index,variant,truth,verdict,g,g0,score,
//   suspect_mean,shadow_mean,status
// summary.csv header:
//   defender,variant,tp,fp,fn,tn,accuracy,f1,auroc
// Reals use the shortest round-trip decimal form; inf/-inf/nan spelled out.
std::string cells_to_csv(std::span<const CellRecord> cells);
std::vector<CellRecord> cells_from_csv(const std::string& text);
std::string summary_to_csv(std::span<const SummaryRow> rows);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace dataprov::metrics
