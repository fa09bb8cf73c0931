#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "minikd/tensor.hpp"

namespace minikd {

// Elementwise / broadcast arithmetic.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_rowvec(const Tensor& a, const Tensor& v);  // a: m x n, v: n

// Linear algebra and layout.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count);
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor stack(const std::vector<Tensor>& parts);  // k tensors r x c -> k x r x c

// Nonlinearities.
/// Row softmax with per-row max subtraction. col_valid, when non-empty,
/// marks key columns that take part in normalization; the rest get
/// probability exactly zero.
Tensor softmax_rows(const Tensor& a);
Tensor softmax_rows_masked(const Tensor& a, const std::vector<std::uint8_t>& col_valid);
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps);
Tensor gelu(const Tensor& a);  // tanh approximation
Tensor tanh_op(const Tensor& a);
Tensor dropout(const Tensor& a, double rate, std::mt19937_64& rng);

// Gather.
Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids);

// Reductions / losses.
Tensor sum_all(const Tensor& a);
Tensor mse(const Tensor& a, const Tensor& b);
/// Mean over rows of KL(softmax(p_logits) || softmax(q_logits)).
Tensor kl_div(const Tensor& p_logits, const Tensor& q_logits);
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

/// Normal(0, stddev) resampled until within two standard deviations.
void fill_trunc_normal(Tensor& t, double stddev, std::mt19937_64& rng);

}  // namespace minikd
