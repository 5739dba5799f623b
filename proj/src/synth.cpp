#include "dataprov/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <utility>

#include "dataprov/error.hpp"
#include "dataprov/format.hpp"
#include "dataprov/seed.hpp"

namespace dataprov::synth {
namespace {

using Rng = std::mt19937_64;

std::vector<double> unit_vector(std::size_t dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : v) {
      x = normal(rng);
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

double determinant(Matrix m) {
  const std::size_t n = m.rows();
  double det = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::fabs(m(r, col)) > std::fabs(m(pivot, col))) pivot = r;
    }
    if (m(pivot, col) == 0.0) return 0.0;
    if (pivot != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(m(pivot, c), m(col, c));
      det = -det;
    }
    det *= m(col, col);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = m(r, col) / m(col, col);
      for (std::size_t c = col; c < n; ++c) m(r, c) -= f * m(col, c);
    }
  }
  return det;
}

void shuffle_rows(LabeledDataset& data, Rng& rng) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  Matrix features(data.size(), data.dim());
  std::vector<std::uint32_t> labels(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    std::copy_n(data.features.row(order[i]).begin(), data.dim(), features.row(i).begin());
    labels[i] = data.labels[order[i]];
  }
  data.features = std::move(features);
  data.labels = std::move(labels);
}

void check_same_space(const LabeledDataset& a, const LabeledDataset& b) {
  if (a.dim() != b.dim() || a.num_classes != b.num_classes) {
    throw Error(ErrorCode::kSpecMismatch,
                "datasets disagree on shape: (K=" + std::to_string(a.num_classes) +
                    ", d=" + std::to_string(a.dim()) + ") vs (K=" + std::to_string(b.num_classes) +
                    ", d=" + std::to_string(b.dim()) + ")");
  }
}

}  // namespace

void WorldParams::validate() const {
  if (num_classes < 2) throw Error(ErrorCode::kInvalidConfig, "need at least two classes");
  if (dim < 1) throw Error(ErrorCode::kInvalidConfig, "feature dimension must be positive");
  if (!(prototype_radius > 0.0)) throw Error(ErrorCode::kInvalidConfig, "prototype radius must be positive");
  if (!(noise_scale > 0.0)) throw Error(ErrorCode::kInvalidConfig, "noise scale must be positive");
  if (!(transform_mix >= 0.0 && transform_mix < 0.5)) {
    throw Error(ErrorCode::kInvalidConfig, "transform mix must lie in [0, 0.5)");
  }
  if (!(bias_scale >= 0.0)) throw Error(ErrorCode::kInvalidConfig, "bias scale must be non-negative");
  if (!(heavy_tail_mix >= 0.0 && heavy_tail_mix <= 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "heavy tail mix must lie in [0,1]");
  }
  if (!(tail_scale > 0.0)) throw Error(ErrorCode::kInvalidConfig, "tail scale must be positive");
}

void GeneratorSpec::validate() const {
  if (class_prototypes.rows() != num_classes || class_prototypes.cols() != dim ||
      transform.rows() != dim || transform.cols() != dim || bias.size() != dim) {
    throw Error(ErrorCode::kSpecMismatch, "generator '" + id + "' has inconsistent shapes");
  }
  if (!(noise_scale > 0.0)) throw Error(ErrorCode::kInvalidConfig, "generator noise scale must be positive");
}

void PromptSpec::validate() const {
  if (!(shift_scale >= 0.0)) throw Error(ErrorCode::kInvalidConfig, "prompt shift must be non-negative");
  for (std::size_t r = 0; r < shift_directions.rows(); ++r) {
    double norm = 0.0;
    for (double x : shift_directions.row(r)) norm += x * x;
    if (std::fabs(std::sqrt(norm) - 1.0) > 1e-9) {
      throw Error(ErrorCode::kInvalidConfig, "prompt shift directions must be unit vectors");
    }
  }
}

void RealSourceSpec::validate() const {
  if (class_prototypes.rows() != num_classes || class_prototypes.cols() != dim) {
    throw Error(ErrorCode::kSpecMismatch, "real source has inconsistent shapes");
  }
  if (!(noise_scale > 0.0)) throw Error(ErrorCode::kInvalidConfig, "real noise scale must be positive");
  if (!(heavy_tail_mix >= 0.0 && heavy_tail_mix <= 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "heavy tail mix must lie in [0,1]");
  }
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (auto y : labels) {
    if (y < num_classes) ++counts[y];
  }
  return counts;
}

void LabeledDataset::validate() const {
  if (features.rows() != labels.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "feature rows and labels differ in count");
  }
  for (auto y : labels) {
    if (y >= num_classes) throw Error(ErrorCode::kDimensionMismatch, "label outside [0, K)");
  }
  for (double x : features.values()) {
    if (!std::isfinite(x)) throw Error(ErrorCode::kNumericalOverflow, "non-finite feature");
  }
}

Matrix make_prototypes(const WorldParams& world) {
  world.validate();
  Rng rng(derive_seed(world.prototype_seed, {0x70726f746fULL}));
  Matrix protos(world.num_classes, world.dim);
  for (std::size_t c = 0; c < world.num_classes; ++c) {
    const auto u = unit_vector(world.dim, rng);
    for (std::size_t j = 0; j < world.dim; ++j) protos(c, j) = world.prototype_radius * u[j];
  }
  return protos;
}

Matrix random_rotation(std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix q(dim, dim);
  for (double& x : q.values()) x = normal(rng);
  // Modified Gram-Schmidt over columns; the sign convention of the implied R
  // diagonal (positive) makes the result Haar distributed.
  for (std::size_t j = 0; j < dim; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double dot = 0.0;
      for (std::size_t i = 0; i < dim; ++i) dot += q(i, k) * q(i, j);
      for (std::size_t i = 0; i < dim; ++i) q(i, j) -= dot * q(i, k);
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < dim; ++i) norm += q(i, j) * q(i, j);
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < dim; ++i) q(i, j) /= norm;
  }
  if (determinant(q) < 0.0) {
    for (std::size_t i = 0; i < dim; ++i) q(i, 0) = -q(i, 0);
  }
  return q;
}

GeneratorSpec make_generator(std::string id, const WorldParams& world, const Matrix& prototypes,
                             std::uint64_t seed) {
  world.validate();
  GeneratorSpec gen;
  gen.id = std::move(id);
  gen.num_classes = world.num_classes;
  gen.dim = world.dim;
  gen.class_prototypes = prototypes;
  gen.noise_scale = world.noise_scale;
  gen.seed = seed;

  const Matrix rot = random_rotation(world.dim, derive_seed(seed, {1}));
  gen.transform = Matrix(world.dim, world.dim);
  for (std::size_t i = 0; i < world.dim; ++i) {
    for (std::size_t j = 0; j < world.dim; ++j) {
      gen.transform(i, j) = world.transform_mix * rot(i, j) + (i == j ? 1.0 - world.transform_mix : 0.0);
    }
  }
  Rng rng(derive_seed(seed, {2}));
  std::normal_distribution<double> normal(0.0, 1.0);
  gen.bias.resize(world.dim);
  for (double& b : gen.bias) b = world.bias_scale * normal(rng);
  gen.validate();
  return gen;
}

PromptSpec make_prompt(std::string id, std::size_t num_classes, std::size_t dim, double shift_scale,
                       std::uint64_t seed) {
  PromptSpec prompt;
  prompt.id = std::move(id);
  prompt.shift_scale = shift_scale;
  prompt.seed = seed;
  prompt.shift_directions = Matrix(num_classes, dim);
  Rng rng(derive_seed(seed, {0x70726f6d7074ULL}));
  for (std::size_t c = 0; c < num_classes; ++c) {
    const auto u = unit_vector(dim, rng);
    std::copy(u.begin(), u.end(), prompt.shift_directions.row(c).begin());
  }
  prompt.validate();
  return prompt;
}

RealSourceSpec make_real_source(std::string id, const WorldParams& world, const Matrix& prototypes,
                                std::uint64_t seed) {
  world.validate();
  RealSourceSpec spec;
  spec.id = std::move(id);
  spec.num_classes = world.num_classes;
  spec.dim = world.dim;
  spec.class_prototypes = prototypes;
  spec.noise_scale = world.noise_scale;
  spec.heavy_tail_mix = world.heavy_tail_mix;
  spec.tail_scale = world.tail_scale;
  spec.seed = seed;
  spec.validate();
  return spec;
}

std::vector<double> class_mean(const GeneratorSpec& gen, const PromptSpec& prompt, std::size_t c) {
  std::vector<double> m(gen.dim);
  for (std::size_t i = 0; i < gen.dim; ++i) {
    double acc = gen.bias[i];
    for (std::size_t j = 0; j < gen.dim; ++j) acc += gen.transform(i, j) * gen.class_prototypes(c, j);
    m[i] = acc + prompt.shift_scale * prompt.shift_directions(c, i);
  }
  return m;
}

LabeledDataset sample_synthetic(const GeneratorSpec& gen, const PromptSpec& prompt,
                                std::size_t n_per_class, std::uint64_t seed) {
  gen.validate();
  prompt.validate();
  if (prompt.shift_directions.rows() != gen.num_classes || prompt.shift_directions.cols() != gen.dim) {
    throw Error(ErrorCode::kSpecMismatch,
                "prompt '" + prompt.id + "' does not match generator '" + gen.id + "' shape");
  }
  if (n_per_class < 1) throw Error(ErrorCode::kInvalidConfig, "n_per_class must be at least 1");

  Rng rng(derive_seed(gen.seed, {prompt.seed, seed}));
  std::normal_distribution<double> normal(0.0, 1.0);
  LabeledDataset data;
  data.num_classes = gen.num_classes;
  data.source_tag = gen.id + "/" + prompt.id;
  data.features = Matrix(gen.num_classes * n_per_class, gen.dim);
  data.labels.resize(gen.num_classes * n_per_class);
  std::size_t row = 0;
  for (std::size_t c = 0; c < gen.num_classes; ++c) {
    const auto centre = class_mean(gen, prompt, c);
    for (std::size_t k = 0; k < n_per_class; ++k, ++row) {
      auto x = data.features.row(row);
      for (std::size_t i = 0; i < gen.dim; ++i) x[i] = centre[i] + gen.noise_scale * normal(rng);
      data.labels[row] = static_cast<std::uint32_t>(c);
    }
  }
  shuffle_rows(data, rng);
  return data;
}

LabeledDataset sample_real(const RealSourceSpec& spec, std::size_t n_per_class, std::uint64_t seed) {
  spec.validate();
  if (n_per_class < 1) throw Error(ErrorCode::kInvalidConfig, "n_per_class must be at least 1");
  Rng rng(derive_seed(spec.seed, {seed}));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  LabeledDataset data;
  data.num_classes = spec.num_classes;
  data.source_tag = spec.id;
  data.features = Matrix(spec.num_classes * n_per_class, spec.dim);
  data.labels.resize(spec.num_classes * n_per_class);
  std::size_t row = 0;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    for (std::size_t k = 0; k < n_per_class; ++k, ++row) {
      const bool wide = unit(rng) < spec.heavy_tail_mix;
      const double scale = wide ? spec.tail_scale * spec.noise_scale : spec.noise_scale;
      auto x = data.features.row(row);
      for (std::size_t i = 0; i < spec.dim; ++i) x[i] = spec.class_prototypes(c, i) + scale * normal(rng);
      data.labels[row] = static_cast<std::uint32_t>(c);
    }
  }
  shuffle_rows(data, rng);
  return data;
}

LabeledDataset mix_datasets(const LabeledDataset& a, const LabeledDataset& b, std::uint64_t seed) {
  check_same_space(a, b);
  LabeledDataset out;
  out.num_classes = a.num_classes;
  out.source_tag = "mix(" + a.source_tag + "+" + b.source_tag + ")";
  out.features = Matrix(a.size() + b.size(), a.dim());
  out.labels.reserve(a.size() + b.size());
  std::size_t row = 0;
  for (const auto* part : {&a, &b}) {
    for (std::size_t i = 0; i < part->size(); ++i, ++row) {
      std::copy_n(part->features.row(i).begin(), part->dim(), out.features.row(row).begin());
      out.labels.push_back(part->labels[i]);
    }
  }
  Rng rng(derive_seed(seed, {0x6d6978ULL}));
  shuffle_rows(out, rng);
  return out;
}

Matrix class_means(const LabeledDataset& data) {
  Matrix means(data.num_classes, data.dim());
  std::vector<std::size_t> counts(data.num_classes, 0);
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto y = data.labels[r];
    ++counts[y];
    auto m = means.row(y);
    const auto x = data.features.row(r);
    for (std::size_t i = 0; i < data.dim(); ++i) m[i] += x[i];
  }
  for (std::size_t c = 0; c < data.num_classes; ++c) {
    if (counts[c] == 0) {
      throw Error(ErrorCode::kMissingClass,
                  "class " + std::to_string(c) + " absent from '" + data.source_tag + "'");
    }
    for (double& v : means.row(c)) v /= static_cast<double>(counts[c]);
  }
  return means;
}

double distribution_gap(const LabeledDataset& a, const LabeledDataset& b) {
  check_same_space(a, b);
  const Matrix ma = class_means(a);
  const Matrix mb = class_means(b);
  double total = 0.0;
  for (std::size_t c = 0; c < a.num_classes; ++c) {
    double sq = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
      const double diff = ma(c, i) - mb(c, i);
      sq += diff * diff;
    }
    total += std::sqrt(sq);
  }
  return total / static_cast<double>(a.num_classes);
}

void write_dataset_csv(const std::filesystem::path& path, const LabeledDataset& data) {
  data.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  out << data.num_classes << ',' << data.dim() << ',' << data.size() << '\n';
  for (std::size_t r = 0; r < data.size(); ++r) {
    out << data.labels[r];
    for (double x : data.features.row(r)) out << ',' << format_double(x);
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing '" + path.string() + "'");
}

LabeledDataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  auto split = [](const std::string& line) {
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (;;) {
      const auto pos = rest.find(',');
      fields.push_back(rest.substr(0, pos));
      if (pos == std::string_view::npos) break;
      rest.remove_prefix(pos + 1);
    }
    return fields;
  };

  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kParse, "empty dataset file");
  const auto header = split(line);
  if (header.size() != 3) throw Error(ErrorCode::kParse, "dataset header must be 'K,d,N'");
  const auto k = parse_integer(header[0]);
  const auto d = parse_integer(header[1]);
  const auto n = parse_integer(header[2]);
  if (k < 2 || d < 1 || n < 0) throw Error(ErrorCode::kParse, "invalid dataset header values");

  LabeledDataset data;
  data.num_classes = static_cast<std::size_t>(k);
  data.source_tag = path.filename().string();
  data.features = Matrix(static_cast<std::size_t>(n), static_cast<std::size_t>(d));
  data.labels.resize(static_cast<std::size_t>(n));
  for (std::size_t r = 0; r < data.labels.size(); ++r) {
    if (!std::getline(in, line)) throw Error(ErrorCode::kParse, "dataset truncated at row " + std::to_string(r));
    const auto fields = split(line);
    if (fields.size() != static_cast<std::size_t>(d) + 1) {
      throw Error(ErrorCode::kParse, "row " + std::to_string(r) + " has wrong field count");
    }
    const auto y = parse_integer(fields[0]);
    if (y < 0 || y >= k) throw Error(ErrorCode::kParse, "row " + std::to_string(r) + " label out of range");
    data.labels[r] = static_cast<std::uint32_t>(y);
    for (std::size_t i = 0; i < static_cast<std::size_t>(d); ++i) {
      data.features(r, i) = parse_double(fields[i + 1]);
    }
  }
  data.validate();
  return data;
}

}  // namespace dataprov::synth
