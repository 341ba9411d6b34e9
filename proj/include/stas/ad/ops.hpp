#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "stas/ad/tensor.hpp"
#include "stas/random.hpp"

// Differentiable operations. Matrices are rank-2 row-major tensors; a rank-1
// tensor of length n is accepted wherever a 1xn row is expected.
namespace stas::ad {

enum class Reduction { Mean, Sum };

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

// x[m x n] + row[n], the row broadcast over every row of x.
Tensor add_row(const Tensor& x, const Tensor& row);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

Tensor tanh(const Tensor& x);
// tanh approximation of GELU.
Tensor gelu(const Tensor& x);

// Max-subtracted softmax along `axis` (negative counts from the back).
Tensor softmax(const Tensor& x, int axis = -1);
Tensor log_softmax(const Tensor& x, int axis = -1);

// Normalizes each vector along the last axis, then applies gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

// Negative log softmax probability of each row's target.
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets,
                     Reduction reduction = Reduction::Mean);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// out[r] = x[r, index[r]]; shape [m].
Tensor pick(const Tensor& x, std::span<const std::size_t> index);

// Rows of `table` selected by `ids` (embedding lookup); shape [ids.size() x cols].
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);

Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);

// Inverted dropout; identity when p == 0.
Tensor dropout(const Tensor& x, double p, Rng& rng);

// Additive attention scores: out[t, i] = sum_c v[c] * tanh(query[t, c] + key[i, c]).
Tensor additive_scores(const Tensor& query, const Tensor& key, const Tensor& v);

}  // namespace stas::ad
