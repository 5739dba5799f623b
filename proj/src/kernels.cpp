#include "dataprov/kernels.hpp"

#include <cstdint>

#include "dataprov/error.hpp"

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace dataprov::kernels {
namespace {

void check_forward(const Matrix& in, const Matrix& weight, std::span<const double> bias, Matrix& out) {
  if (in.cols() != weight.cols() || bias.size() != weight.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "dense layer input does not match weight shape");
  }
  if (out.rows() != in.rows() || out.cols() != weight.rows()) out = Matrix(in.rows(), weight.rows());
}

void check_weight_grad(const Matrix& grad_out, const Matrix& in, Matrix& grad_w) {
  if (grad_out.rows() != in.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "gradient and activation batch sizes differ");
  }
  if (grad_w.rows() != grad_out.cols() || grad_w.cols() != in.cols()) {
    grad_w = Matrix(grad_out.cols(), in.cols());
  }
}

void check_input_grad(const Matrix& grad_out, const Matrix& weight, Matrix& grad_in) {
  if (grad_out.cols() != weight.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "gradient does not match weight rows");
  }
  if (grad_in.rows() != grad_out.rows() || grad_in.cols() != weight.cols()) {
    grad_in = Matrix(grad_out.rows(), weight.cols());
  }
}

}  // namespace

int available_threads() {
#if defined(_OPENMP)
  return omp_in_parallel() ? 1 : omp_get_max_threads();
#else
  return 1;
#endif
}

// ---------------------------------------------------------------------------
// Serial reference.

namespace reference {

void dense_forward(const Matrix& in, const Matrix& weight, std::span<const double> bias, Matrix& out) {
  check_forward(in, weight, bias, out);
  for (std::size_t b = 0; b < in.rows(); ++b) {
    for (std::size_t o = 0; o < weight.rows(); ++o) {
      double acc = bias[o];
      for (std::size_t i = 0; i < in.cols(); ++i) acc += in(b, i) * weight(o, i);
      out(b, o) = acc;
    }
  }
}

void dense_weight_grad(const Matrix& grad_out, const Matrix& in, Matrix& grad_w) {
  check_weight_grad(grad_out, in, grad_w);
  for (std::size_t o = 0; o < grad_out.cols(); ++o) {
    for (std::size_t i = 0; i < in.cols(); ++i) {
      double acc = 0.0;
      for (std::size_t b = 0; b < in.rows(); ++b) acc += grad_out(b, o) * in(b, i);
      grad_w(o, i) = acc;
    }
  }
}

void dense_bias_grad(const Matrix& grad_out, std::span<double> grad_b) {
  if (grad_b.size() != grad_out.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "bias gradient size mismatch");
  }
  for (std::size_t o = 0; o < grad_out.cols(); ++o) {
    double acc = 0.0;
    for (std::size_t b = 0; b < grad_out.rows(); ++b) acc += grad_out(b, o);
    grad_b[o] = acc;
  }
}

void dense_input_grad(const Matrix& grad_out, const Matrix& weight, Matrix& grad_in) {
  check_input_grad(grad_out, weight, grad_in);
  for (std::size_t b = 0; b < grad_out.rows(); ++b) {
    for (std::size_t i = 0; i < weight.cols(); ++i) {
      double acc = 0.0;
      for (std::size_t o = 0; o < weight.rows(); ++o) acc += grad_out(b, o) * weight(o, i);
      grad_in(b, i) = acc;
    }
  }
}

void relu(Matrix& m) {
  for (double& x : m.values()) x = x > 0.0 ? x : 0.0;
}

void relu_backward(const Matrix& activation, Matrix& grad) {
  if (activation.rows() != grad.rows() || activation.cols() != grad.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "relu backward shape mismatch");
  }
  const auto a = activation.values();
  auto g = grad.values();
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!(a[k] > 0.0)) g[k] = 0.0;
  }
}

}  // namespace reference

// ---------------------------------------------------------------------------
// OpenMP versions. Loops are reordered for contiguous access, but each output
// element still sums its terms in ascending index order.

void dense_forward(const Matrix& in, const Matrix& weight, std::span<const double> bias, Matrix& out) {
  check_forward(in, weight, bias, out);
  const auto batch = static_cast<std::int64_t>(in.rows());
  const std::size_t outputs = weight.rows();
  const std::size_t inputs = in.cols();
  const bool wide = in.rows() * outputs * inputs >= kParallelWorkThreshold;
#pragma omp parallel for schedule(static) if (wide)
  for (std::int64_t b = 0; b < batch; ++b) {
    const double* x = in.row(static_cast<std::size_t>(b)).data();
    double* y = out.row(static_cast<std::size_t>(b)).data();
    for (std::size_t o = 0; o < outputs; ++o) {
      const double* w = weight.row(o).data();
      double acc = bias[o];
      for (std::size_t i = 0; i < inputs; ++i) acc += x[i] * w[i];
      y[o] = acc;
    }
  }
}

void dense_weight_grad(const Matrix& grad_out, const Matrix& in, Matrix& grad_w) {
  check_weight_grad(grad_out, in, grad_w);
  const auto outputs = static_cast<std::int64_t>(grad_out.cols());
  const std::size_t batch = in.rows();
  const std::size_t inputs = in.cols();
  const bool wide = batch * grad_out.cols() * inputs >= kParallelWorkThreshold;
#pragma omp parallel for schedule(static) if (wide)
  for (std::int64_t o = 0; o < outputs; ++o) {
    double* gw = grad_w.row(static_cast<std::size_t>(o)).data();
    for (std::size_t i = 0; i < inputs; ++i) gw[i] = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const double g = grad_out(b, static_cast<std::size_t>(o));
      const double* x = in.row(b).data();
      for (std::size_t i = 0; i < inputs; ++i) gw[i] += g * x[i];
    }
  }
}

void dense_bias_grad(const Matrix& grad_out, std::span<double> grad_b) {
  if (grad_b.size() != grad_out.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "bias gradient size mismatch");
  }
  for (double& g : grad_b) g = 0.0;
  for (std::size_t b = 0; b < grad_out.rows(); ++b) {
    const auto row = grad_out.row(b);
    for (std::size_t o = 0; o < row.size(); ++o) grad_b[o] += row[o];
  }
}

void dense_input_grad(const Matrix& grad_out, const Matrix& weight, Matrix& grad_in) {
  check_input_grad(grad_out, weight, grad_in);
  const auto batch = static_cast<std::int64_t>(grad_out.rows());
  const std::size_t outputs = weight.rows();
  const std::size_t inputs = weight.cols();
  const bool wide = grad_out.rows() * outputs * inputs >= kParallelWorkThreshold;
#pragma omp parallel for schedule(static) if (wide)
  for (std::int64_t b = 0; b < batch; ++b) {
    double* gi = grad_in.row(static_cast<std::size_t>(b)).data();
    const double* go = grad_out.row(static_cast<std::size_t>(b)).data();
    for (std::size_t i = 0; i < inputs; ++i) gi[i] = 0.0;
    for (std::size_t o = 0; o < outputs; ++o) {
      const double g = go[o];
      const double* w = weight.row(o).data();
      for (std::size_t i = 0; i < inputs; ++i) gi[i] += g * w[i];
    }
  }
}

void relu(Matrix& m) {
  auto v = m.values();
  const auto n = static_cast<std::int64_t>(v.size());
#pragma omp parallel for schedule(static) if (v.size() >= kParallelWorkThreshold)
  for (std::int64_t k = 0; k < n; ++k) {
    const double x = v[static_cast<std::size_t>(k)];
    v[static_cast<std::size_t>(k)] = x > 0.0 ? x : 0.0;
  }
}

void relu_backward(const Matrix& activation, Matrix& grad) {
  reference::relu_backward(activation, grad);
}

}  // namespace dataprov::kernels
