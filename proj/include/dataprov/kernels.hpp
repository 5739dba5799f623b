#pragma once

#include <cstddef>
#include <span>

#include "dataprov/matrix.hpp"

// Dense-layer kernels used by the classifier. Two implementations share each
// signature: `reference` is a plain serial loop nest kept as the test oracle,
// the top-level namespace holds the OpenMP versions. Every output element is
// accumulated in the same order by both, so results are bit-identical and do
// not depend on the thread count.
namespace dataprov::kernels {

// Below this many multiply-adds a call stays on the calling thread.
inline constexpr std::size_t kParallelWorkThreshold = 1 << 16;

/// out(B x O) = in(B x I) * weight(O x I)^T + bias(O)
void dense_forward(const Matrix& in, const Matrix& weight, std::span<const double> bias, Matrix& out);

/// grad_w(O x I) = grad_out(B x O)^T * in(B x I)
void dense_weight_grad(const Matrix& grad_out, const Matrix& in, Matrix& grad_w);

/// grad_b(O) = column sums of grad_out
void dense_bias_grad(const Matrix& grad_out, std::span<double> grad_b);

/// grad_in(B x I) = grad_out(B x O) * weight(O x I)
void dense_input_grad(const Matrix& grad_out, const Matrix& weight, Matrix& grad_in);

void relu(Matrix& m);

/// grad(i) *= [activation(i) > 0]
void relu_backward(const Matrix& activation, Matrix& grad);

namespace reference {

void dense_forward(const Matrix& in, const Matrix& weight, std::span<const double> bias, Matrix& out);
void dense_weight_grad(const Matrix& grad_out, const Matrix& in, Matrix& grad_w);
void dense_bias_grad(const Matrix& grad_out, std::span<double> grad_b);
void dense_input_grad(const Matrix& grad_out, const Matrix& weight, Matrix& grad_in);
void relu(Matrix& m);
void relu_backward(const Matrix& activation, Matrix& grad);

}  // namespace reference

/// Threads OpenMP would use for a parallel region started here (1 when built
/// without OpenMP or inside an active parallel region).
int available_threads();

}  // namespace dataprov::kernels
