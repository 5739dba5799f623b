#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dataprov/matrix.hpp"

namespace dataprov::synth {

// Shape and scale of the simulated world shared by every source.
struct WorldParams {
  std::size_t num_classes = 10;
  std::size_t dim = 16;
  double prototype_radius = 4.0;
  std::uint64_t prototype_seed = 7;
  double noise_scale = 0.7;
  double transform_mix = 0.35;  // A = (1 - mix) I + mix R
  double bias_scale = 0.4;      // per-coordinate std of the generator bias
  double heavy_tail_mix = 0.1;
  double tail_scale = 3.0;      // wide component std, in units of noise_scale

  void validate() const;
};

// Stand-in for a text-to-image model: class-conditional affine Gaussian family.
struct GeneratorSpec {
  std::string id;
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  Matrix class_prototypes;  // K x d
  Matrix transform;         // d x d
  std::vector<double> bias;
  double noise_scale = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Stand-in for a prompt set: a small per-class shift of the generated means.
struct PromptSpec {
  std::string id;
  double shift_scale = 0.0;
  Matrix shift_directions;  // K x d, unit rows
  std::uint64_t seed = 0;

  void validate() const;
};

struct RealSourceSpec {
  std::string id = "real";
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  Matrix class_prototypes;
  double noise_scale = 0.0;
  double heavy_tail_mix = 0.0;
  double tail_scale = 3.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LabeledDataset {
  Matrix features;  // N x d
  std::vector<std::uint32_t> labels;
  std::size_t num_classes = 0;
  std::string source_tag;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return features.cols(); }
  std::vector<std::size_t> class_counts() const;
  void validate() const;
};

/// K points drawn uniformly on the sphere of the configured radius.
Matrix make_prototypes(const WorldParams& world);

/// Seeded random rotation (Haar-distributed orthogonal matrix with det = +1).
Matrix random_rotation(std::size_t dim, std::uint64_t seed);

GeneratorSpec make_generator(std::string id, const WorldParams& world, const Matrix& prototypes,
                             std::uint64_t seed);
PromptSpec make_prompt(std::string id, std::size_t num_classes, std::size_t dim,
                       double shift_scale, std::uint64_t seed);
RealSourceSpec make_real_source(std::string id, const WorldParams& world, const Matrix& prototypes,
                                std::uint64_t seed);

/// Mean of class c under (gen, prompt): A mu_c + b + delta v_c.
std::vector<double> class_mean(const GeneratorSpec& gen, const PromptSpec& prompt, std::size_t c);

/// n_per_class rows per class, x = A mu_c + b + delta v_c + eps, eps ~ N(0, sigma^2 I),
/// rows in seeded shuffled order.
LabeledDataset sample_synthetic(const GeneratorSpec& gen, const PromptSpec& prompt,
                                std::size_t n_per_class, std::uint64_t seed);

/// x = mu_c + eps with eps from the two-component Gaussian scale mixture.
LabeledDataset sample_real(const RealSourceSpec& spec, std::size_t n_per_class, std::uint64_t seed);

/// Concatenation of a and b with rows shuffled by seed.
LabeledDataset mix_datasets(const LabeledDataset& a, const LabeledDataset& b, std::uint64_t seed);

/// Per-class empirical means, K x d. Throws kMissingClass when a class has no rows.
Matrix class_means(const LabeledDataset& data);

/// Mean over classes of the distance between per-class empirical means.
double distribution_gap(const LabeledDataset& a, const LabeledDataset& b);

// Dataset files are CSV: a header line "K,d,N", then N rows "label,f_1,...,f_d"
// with shortest round-trip decimal formatting.
void write_dataset_csv(const std::filesystem::path& path, const LabeledDataset& data);
LabeledDataset read_dataset_csv(const std::filesystem::path& path);

}  // namespace dataprov::synth
