#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dataprov/matrix.hpp"
#include "dataprov/synth.hpp"

namespace dataprov::learner {

enum class LossKind { kCrossEntropy, kFocal };

struct LossSpec {
  LossKind kind = LossKind::kCrossEntropy;
  double gamma = 2.0;   // focal only
  double alpha = 0.25;  // focal only

  static LossSpec cross_entropy() { return {}; }
  static LossSpec focal(double gamma = 2.0, double alpha = 0.25) {
    return {LossKind::kFocal, gamma, alpha};
  }
  friend bool operator==(const LossSpec&, const LossSpec&) = default;
};

std::string to_string(const LossSpec& loss);
LossSpec parse_loss(const std::string& name);

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  double weight_decay = 1e-3;
  LossSpec loss;
  std::uint64_t shuffle_seed = 0;

  void validate() const;
};

struct TrainHistory {
  std::vector<double> epoch_loss;  // mean loss over each epoch's mini-batches
  double final_train_accuracy = 0.0;
};

struct DenseLayer {
  Matrix weight;  // out x in
  std::vector<double> bias;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Fully connected classifier: input -> [ReLU hidden] -> K logits.
// hidden_width == 0 gives a linear (softmax regression) model.
class MlpClassifier {
 public:
  MlpClassifier(std::size_t input_dim, std::size_t hidden_width, std::size_t num_classes,
                std::uint64_t init_seed);
  MlpClassifier(std::vector<std::size_t> layer_dims, std::vector<DenseLayer> layers,
                std::uint64_t init_seed);

  std::size_t input_dim() const noexcept { return dims_.front(); }
  std::size_t num_classes() const noexcept { return dims_.back(); }
  std::size_t hidden_width() const noexcept { return dims_.size() == 3 ? dims_[1] : 0; }
  const std::vector<std::size_t>& layer_dims() const noexcept { return dims_; }
  std::uint64_t init_seed() const noexcept { return init_seed_; }

  std::span<DenseLayer> layers() noexcept { return layers_; }
  std::span<const DenseLayer> layers() const noexcept { return layers_; }

  std::size_t parameter_count() const noexcept;
  bool all_finite() const noexcept;
  void zero_parameters();

  friend bool operator==(const MlpClassifier&, const MlpClassifier&) = default;

 private:
  void check_shapes() const;

  std::vector<std::size_t> dims_;
  std::vector<DenseLayer> layers_;
  std::uint64_t init_seed_ = 0;
};

struct LossAndGrad {
  double loss = 0.0;
  std::vector<DenseLayer> gradients;  // same shapes as the model layers
};

/// Batch-mean loss and its exact gradient. Focal loss is
/// FL(p_t) = -alpha (1 - p_t)^gamma log p_t.
LossAndGrad loss_and_grad(const MlpClassifier& model, const Matrix& features,
                          std::span<const std::uint32_t> labels, const LossSpec& loss);

/// Batch-mean loss only.
double mean_loss(const MlpClassifier& model, const Matrix& features,
                 std::span<const std::uint32_t> labels, const LossSpec& loss);

/// Mini-batch gradient descent with decoupled weight decay:
/// theta <- (1 - lr * wd) theta - lr * grad.
std::pair<MlpClassifier, TrainHistory> train(MlpClassifier model, const synth::LabeledDataset& data,
                                             const TrainConfig& config);

Matrix predict_logits(const MlpClassifier& model, const Matrix& features);

/// Row-wise argmax; ties go to the lowest class index.
std::vector<std::uint32_t> argmax_rows(const Matrix& logits);

std::vector<std::uint32_t> predict_labels(const MlpClassifier& model, const Matrix& features);

double dataset_accuracy(const MlpClassifier& model, const synth::LabeledDataset& data);

// Checkpoint layout (all integers u64, all reals f64, little-endian):
//   magic "DPMLPCK1" | n_dims | dims[n_dims] | init_seed |
//   per layer: weight (out x in, row-major) then bias (out)
void save_checkpoint(const std::filesystem::path& path, const MlpClassifier& model);
MlpClassifier load_checkpoint(const std::filesystem::path& path);

}  // namespace dataprov::learner
