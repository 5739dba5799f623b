#include "dataprov/mlp.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "dataprov/error.hpp"
#include "dataprov/kernels.hpp"
#include "dataprov/seed.hpp"

namespace dataprov::learner {
namespace {

struct ForwardPass {
  Matrix hidden;  // post-ReLU, empty for linear models
  Matrix logits;
};

ForwardPass forward(const MlpClassifier& model, const Matrix& features) {
  if (features.cols() != model.input_dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "expected " + std::to_string(model.input_dim()) + " features, got " +
                    std::to_string(features.cols()));
  }
  ForwardPass pass;
  const auto layers = model.layers();
  if (layers.size() == 1) {
    kernels::dense_forward(features, layers[0].weight, layers[0].bias, pass.logits);
    return pass;
  }
  kernels::dense_forward(features, layers[0].weight, layers[0].bias, pass.hidden);
  kernels::relu(pass.hidden);
  kernels::dense_forward(pass.hidden, layers[1].weight, layers[1].bias, pass.logits);
  return pass;
}

// Writes dLoss_i/dz into grad_row and returns loss_i.
double sample_loss_grad(std::span<const double> z, std::uint32_t y, const LossSpec& loss,
                        std::span<double> grad_row, std::vector<double>& prob) {
  const double top = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - top);
  const double log_norm = top + std::log(sum);
  prob.resize(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) prob[j] = std::exp(z[j] - log_norm);
  const double log_pt = z[y] - log_norm;

  if (loss.kind == LossKind::kCrossEntropy) {
    for (std::size_t j = 0; j < z.size(); ++j) grad_row[j] = prob[j] - (j == y ? 1.0 : 0.0);
    return -log_pt;
  }

  // Focal: with q = 1 - p_t (summed from the other classes for accuracy),
  // dFL/dz_j = alpha * (gamma q^(gamma-1) p_t log p_t - q^gamma) * (delta_jy - p_j).
  double q = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (j != y) q += prob[j];
  }
  const double pt = prob[y];
  const double q_gamma = std::pow(q, loss.gamma);
  const double modulating = (loss.gamma == 0.0 || q == 0.0)
                                ? 0.0
                                : loss.gamma * std::pow(q, loss.gamma - 1.0) * pt * log_pt;
  const double coef = loss.alpha * (modulating - q_gamma);
  for (std::size_t j = 0; j < z.size(); ++j) grad_row[j] = coef * ((j == y ? 1.0 : 0.0) - prob[j]);
  return -loss.alpha * q_gamma * log_pt;
}

void check_batch(const MlpClassifier& model, const Matrix& features, std::span<const std::uint32_t> labels) {
  if (features.rows() == 0) throw Error(ErrorCode::kEmptyInput, "empty batch");
  if (features.rows() != labels.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "batch features and labels differ in count");
  }
  for (auto y : labels) {
    if (y >= model.num_classes()) throw Error(ErrorCode::kDimensionMismatch, "label out of range");
  }
}

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xffU);
  out.write(bytes.data(), bytes.size());
}

std::uint64_t get_u64(std::istream& in) {
  std::array<unsigned char, 8> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw Error(ErrorCode::kParse, "checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

constexpr std::string_view kCheckpointMagic = "DPMLPCK1";

}  // namespace

std::string to_string(const LossSpec& loss) {
  return loss.kind == LossKind::kCrossEntropy ? "ce" : "focal";
}

LossSpec parse_loss(const std::string& name) {
  if (name == "ce" || name == "cross_entropy") return LossSpec::cross_entropy();
  if (name == "focal") return LossSpec::focal();
  throw Error(ErrorCode::kInvalidConfig, "unknown loss '" + name + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorCode::kInvalidConfig, "epochs must be at least 1");
  if (batch_size < 1) throw Error(ErrorCode::kInvalidConfig, "batch size must be at least 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorCode::kInvalidConfig, "learning rate must be positive");
  }
  if (!(weight_decay >= 0.0)) throw Error(ErrorCode::kInvalidConfig, "weight decay must be non-negative");
  if (loss.kind == LossKind::kFocal && (!(loss.gamma >= 0.0) || !(loss.alpha > 0.0))) {
    throw Error(ErrorCode::kInvalidConfig, "focal loss needs gamma >= 0 and alpha > 0");
  }
}

MlpClassifier::MlpClassifier(std::size_t input_dim, std::size_t hidden_width, std::size_t num_classes,
                             std::uint64_t init_seed)
    : init_seed_(init_seed) {
  if (input_dim == 0 || num_classes < 2) {
    throw Error(ErrorCode::kInvalidConfig, "classifier needs input_dim >= 1 and at least two classes");
  }
  dims_ = hidden_width == 0 ? std::vector<std::size_t>{input_dim, num_classes}
                            : std::vector<std::size_t>{input_dim, hidden_width, num_classes};
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    const std::size_t in = dims_[l];
    const std::size_t out = dims_[l + 1];
    const bool is_output = l + 2 == dims_.size();
    // He scaling ahead of a ReLU, unit-gain scaling on the logit layer.
    const double scale = std::sqrt((is_output ? 1.0 : 2.0) / static_cast<double>(in));
    std::mt19937_64 rng(derive_seed(init_seed, {l}));
    std::normal_distribution<double> normal(0.0, scale);
    DenseLayer layer{Matrix(out, in), std::vector<double>(out, 0.0)};
    for (double& w : layer.weight.values()) w = normal(rng);
    layers_.push_back(std::move(layer));
  }
}

MlpClassifier::MlpClassifier(std::vector<std::size_t> layer_dims, std::vector<DenseLayer> layers,
                             std::uint64_t init_seed)
    : dims_(std::move(layer_dims)), layers_(std::move(layers)), init_seed_(init_seed) {
  check_shapes();
}

void MlpClassifier::check_shapes() const {
  if (dims_.size() < 2 || dims_.size() > 3 || layers_.size() + 1 != dims_.size()) {
    throw Error(ErrorCode::kInvalidConfig, "classifier supports zero or one hidden layer");
  }
  if (dims_.front() == 0 || dims_.back() < 2) {
    throw Error(ErrorCode::kInvalidConfig, "classifier needs input_dim >= 1 and at least two classes");
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].weight.rows() != dims_[l + 1] || layers_[l].weight.cols() != dims_[l] ||
        layers_[l].bias.size() != dims_[l + 1]) {
      throw Error(ErrorCode::kDimensionMismatch, "layer " + std::to_string(l) + " has wrong shape");
    }
  }
}

std::size_t MlpClassifier::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.weight.size() + layer.bias.size();
  return n;
}

bool MlpClassifier::all_finite() const noexcept {
  for (const auto& layer : layers_) {
    for (double w : layer.weight.values()) {
      if (!std::isfinite(w)) return false;
    }
    for (double b : layer.bias) {
      if (!std::isfinite(b)) return false;
    }
  }
  return true;
}

void MlpClassifier::zero_parameters() {
  for (auto& layer : layers_) {
    layer.weight.fill(0.0);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
}

LossAndGrad loss_and_grad(const MlpClassifier& model, const Matrix& features,
                          std::span<const std::uint32_t> labels, const LossSpec& loss) {
  check_batch(model, features, labels);
  const ForwardPass pass = forward(model, features);
  const std::size_t batch = features.rows();
  const double inv_batch = 1.0 / static_cast<double>(batch);

  Matrix grad_logits(batch, model.num_classes());
  std::vector<double> prob;
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const auto z = pass.logits.row(b);
    for (double v : z) {
      if (!std::isfinite(v)) throw Error(ErrorCode::kNumericalOverflow, "non-finite logit in forward pass");
    }
    total += sample_loss_grad(z, labels[b], loss, grad_logits.row(b), prob);
  }
  for (double& g : grad_logits.values()) g *= inv_batch;

  LossAndGrad out;
  out.loss = total * inv_batch;
  if (!std::isfinite(out.loss)) throw Error(ErrorCode::kNumericalOverflow, "non-finite loss");

  const auto layers = model.layers();
  out.gradients.resize(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    out.gradients[l].bias.resize(layers[l].bias.size());
  }
  if (layers.size() == 1) {
    kernels::dense_weight_grad(grad_logits, features, out.gradients[0].weight);
    kernels::dense_bias_grad(grad_logits, out.gradients[0].bias);
    return out;
  }
  kernels::dense_weight_grad(grad_logits, pass.hidden, out.gradients[1].weight);
  kernels::dense_bias_grad(grad_logits, out.gradients[1].bias);
  Matrix grad_hidden;
  kernels::dense_input_grad(grad_logits, layers[1].weight, grad_hidden);
  kernels::relu_backward(pass.hidden, grad_hidden);
  kernels::dense_weight_grad(grad_hidden, features, out.gradients[0].weight);
  kernels::dense_bias_grad(grad_hidden, out.gradients[0].bias);
  return out;
}

double mean_loss(const MlpClassifier& model, const Matrix& features,
                 std::span<const std::uint32_t> labels, const LossSpec& loss) {
  return loss_and_grad(model, features, labels, loss).loss;
}

std::pair<MlpClassifier, TrainHistory> train(MlpClassifier model, const synth::LabeledDataset& data,
                                             const TrainConfig& config) {
  config.validate();
  data.validate();
  if (data.dim() != model.input_dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "dataset dimension does not match model input");
  }
  if (data.num_classes != model.num_classes()) {
    throw Error(ErrorCode::kDimensionMismatch, "dataset class count does not match model output");
  }
  if (data.size() == 0) throw Error(ErrorCode::kEmptyInput, "cannot train on an empty dataset");

  std::mt19937_64 rng(derive_seed(config.shuffle_seed, {0x73687566666c65ULL}));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const double decay = 1.0 - config.learning_rate * config.weight_decay;
  const double lr = config.learning_rate;

  TrainHistory history;
  Matrix batch_x;
  std::vector<std::uint32_t> batch_y;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, order.size() - start);
      if (batch_x.rows() != count) batch_x = Matrix(count, data.dim());
      batch_y.resize(count);
      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t src = order[start + k];
        std::copy_n(data.features.row(src).begin(), data.dim(), batch_x.row(k).begin());
        batch_y[k] = data.labels[src];
      }
      LossAndGrad step;
      try {
        step = loss_and_grad(model, batch_x, batch_y, config.loss);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kNumericalOverflow) throw NumericalOverflowError(epoch, e.what());
        throw;
      }
      epoch_total += step.loss * static_cast<double>(count);
      auto layers = model.layers();
      for (std::size_t l = 0; l < layers.size(); ++l) {
        auto w = layers[l].weight.values();
        const auto gw = step.gradients[l].weight.values();
        for (std::size_t k = 0; k < w.size(); ++k) w[k] = decay * w[k] - lr * gw[k];
        auto& b = layers[l].bias;
        const auto& gb = step.gradients[l].bias;
        for (std::size_t k = 0; k < b.size(); ++k) b[k] = decay * b[k] - lr * gb[k];
      }
    }
    if (!model.all_finite()) throw NumericalOverflowError(epoch, "non-finite parameters after update");
    history.epoch_loss.push_back(epoch_total / static_cast<double>(data.size()));
  }
  history.final_train_accuracy = dataset_accuracy(model, data);
  return {std::move(model), std::move(history)};
}

Matrix predict_logits(const MlpClassifier& model, const Matrix& features) {
  return forward(model, features).logits;
}

std::vector<std::uint32_t> argmax_rows(const Matrix& logits) {
  std::vector<std::uint32_t> labels(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto z = logits.row(r);
    std::size_t best = 0;
    for (std::size_t j = 1; j < z.size(); ++j) {
      if (z[j] > z[best]) best = j;
    }
    labels[r] = static_cast<std::uint32_t>(best);
  }
  return labels;
}

std::vector<std::uint32_t> predict_labels(const MlpClassifier& model, const Matrix& features) {
  return argmax_rows(predict_logits(model, features));
}

double dataset_accuracy(const MlpClassifier& model, const synth::LabeledDataset& data) {
  if (data.size() == 0) throw Error(ErrorCode::kEmptyInput, "accuracy of an empty dataset");
  const auto predicted = predict_labels(model, data.features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == data.labels[i];
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

void save_checkpoint(const std::filesystem::path& path, const MlpClassifier& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  out.write(kCheckpointMagic.data(), static_cast<std::streamsize>(kCheckpointMagic.size()));
  put_u64(out, model.layer_dims().size());
  for (auto d : model.layer_dims()) put_u64(out, d);
  put_u64(out, model.init_seed());
  for (const auto& layer : model.layers()) {
    for (double w : layer.weight.values()) put_f64(out, w);
    for (double b : layer.bias) put_f64(out, b);
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing checkpoint '" + path.string() + "'");
}

MlpClassifier load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open checkpoint '" + path.string() + "'");
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || std::string_view(magic.data(), magic.size()) != kCheckpointMagic) {
    throw Error(ErrorCode::kParse, "'" + path.string() + "' is not a classifier checkpoint");
  }
  const auto n_dims = get_u64(in);
  if (n_dims < 2 || n_dims > 3) throw Error(ErrorCode::kParse, "checkpoint has unsupported depth");
  std::vector<std::size_t> dims(n_dims);
  for (auto& d : dims) {
    d = static_cast<std::size_t>(get_u64(in));
    if (d == 0 || d > (1U << 20)) throw Error(ErrorCode::kParse, "checkpoint layer width out of range");
  }
  const auto seed = get_u64(in);
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    DenseLayer layer{Matrix(dims[l + 1], dims[l]), std::vector<double>(dims[l + 1])};
    for (double& w : layer.weight.values()) w = get_f64(in);
    for (double& b : layer.bias) b = get_f64(in);
    layers.push_back(std::move(layer));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorCode::kParse, "trailing bytes after checkpoint parameters");
  }
  return MlpClassifier(std::move(dims), std::move(layers), seed);
}

}  // namespace dataprov::learner
