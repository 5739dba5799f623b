#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dataprov/metrics.hpp"
#include "dataprov/mlp.hpp"
#include "dataprov/synth.hpp"
#include "dataprov/verifier.hpp"

namespace dataprov::bench {

struct SourceSeed {
  std::string id;
  std::uint64_t seed = 0;
};

// Axes of the suspect population. The full grid is their Cartesian product
// (4 x 2 x 2 x 2 x 2 = 64 by default); the fast grid crosses widths and
// losses with two paired (batch size, learning rate, weight decay) settings.
struct SuspectSettings {
  std::size_t n_per_class = 300;
  std::size_t epochs = 10;
  std::vector<std::size_t> hidden_widths{0, 32, 64, 128};
  std::vector<std::size_t> batch_sizes{32, 64};
  std::vector<double> learning_rates{0.05, 0.1};
  std::vector<double> weight_decays{1e-2, 1e-3};
  std::vector<learner::LossSpec> losses{learner::LossSpec::cross_entropy(), learner::LossSpec::focal()};
};

enum class Transport { kInProcess, kServed };
enum class GridMode { kFast, kFull };

inline constexpr const char* kRealSource = "real";
inline constexpr const char* kMixedSource = "mixed";
inline constexpr const char* kRandomVariant = "random";

struct BenchmarkConfig {
  std::uint64_t seed = 20240521;
  std::size_t replicates = 20;
  synth::WorldParams world;
  std::vector<SourceSeed> generators{{"gen_a", 101}, {"gen_b", 202}, {"gen_c", 303}, {"gen_d", 404}};
  std::uint64_t real_seed = 505;
  // Suspect data sources: generator ids, "real", "mixed". Empty = every
  // generator plus "real" (plus "mixed" when `mixed` is set).
  std::vector<std::string> sources;
  std::vector<std::string> defenders;  // empty = every generator
  bool mixed = false;
  verifier::PromptParams suspect_prompt{"suspect", 0.2, 37};
  SuspectSettings suspects;
  GridMode grid = GridMode::kFull;
  verifier::VerificationConfig verification;
  std::vector<std::string> variants{"accuracy", "entropy", "similarity", "random"};
  Transport transport = Transport::kInProcess;
  std::size_t workers = 0;  // 0 = available cores

  void validate() const;
  std::vector<std::string> resolved_sources() const;
  std::vector<std::string> resolved_defenders() const;
};

BenchmarkConfig config_from_json(const std::string& text);
BenchmarkConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const BenchmarkConfig& config);

struct SuspectPlan {
  std::size_t index = 0;
  std::size_t hidden_width = 0;
  learner::TrainConfig train;  // shuffle_seed filled per cell
};

std::vector<SuspectPlan> suspect_grid(const SuspectSettings& settings, GridMode mode);

// Generators and real source of one replicate.
struct World {
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
  std::vector<synth::GeneratorSpec> generators;
  synth::RealSourceSpec real;

  const synth::GeneratorSpec& generator(const std::string& id) const;
};

std::uint64_t replicate_seed(const BenchmarkConfig& config, std::size_t replicate);
World build_world(const BenchmarkConfig& config, std::size_t replicate);

/// Training data of a suspect. Mixed sources depend on the defender; other
/// sources ignore it.
synth::LabeledDataset source_dataset(const BenchmarkConfig& config, const World& world, const std::string& source,
                                     const std::string& defender);

std::uint64_t shadow_seed(const World& world, const std::string& defender);
std::uint64_t suspect_seed(const World& world, const std::string& source, const std::string& defender,
                           std::size_t suspect_index);

/// Untrained suspect and its training config with seeds filled in.
std::pair<learner::MlpClassifier, learner::TrainConfig> suspect_setup(const BenchmarkConfig& config,
                                                                     const World& world, const SuspectPlan& plan,
                                                                     const std::string& source,
                                                                     const std::string& defender);

verifier::Verdict truth_for(const std::string& source, const std::string& defender);

struct BenchmarkResult {
  std::vector<metrics::CellRecord> cells;
  std::vector<metrics::SummaryRow> summary;
  std::size_t failed_cells = 0;
  std::string manifest_json;
};

BenchmarkResult run_benchmark(const BenchmarkConfig& config);

/// Writes cells.csv, summary.csv and manifest.json into `out_dir`.
void write_outputs(const BenchmarkResult& result, const std::filesystem::path& out_dir);

}  // namespace dataprov::bench
