#pragma once

#include <functional>
#include <initializer_list>
#include <span>
#include <string>

#include "knowdial/tensor.hpp"

namespace knowdial {

enum class PrimitiveKind {
  kMatmul,
  kConcatLastAxis,
  kTanh,
  kSoftmaxOverAxis,
  kHadamard,
  kAdd,
  kScale,
  kMeanOverAxis,
  kEmbeddingLookup,
};

PrimitiveKind primitive_kind_from_string(const std::string& name);

namespace ops {

// Rank-2 x rank-2 matrix product; rank-1 operands are treated as a row
// vector on the left and a column vector on the right, so [k]x[k] is a
// dot product with scalar output.
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

// Concatenation along the last axis. Rank-1 inputs concatenate into one
// longer vector; rank-2 inputs must agree on the row count.
Tensor concat(Tape& tape, std::span<const Tensor> xs);
Tensor concat(Tape& tape, std::initializer_list<Tensor> xs);

Tensor tanh(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);

// Max-subtracted softmax along `axis` of a rank-1 or rank-2 tensor.
Tensor softmax(Tape& tape, const Tensor& x, int axis);

Tensor hadamard(Tape& tape, const Tensor& a, const Tensor& b);

// Elementwise sum; also accepts [n,d] + [d] with the vector added to
// every row.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);

// Multiplication by a non-learned constant.
Tensor scale(Tape& tape, const Tensor& x, double c);

// Multiplication by a scalar tensor; gradients flow into both factors.
Tensor scale_by(Tape& tape, const Tensor& x, const Tensor& s);

Tensor mean(Tape& tape, const Tensor& x, int axis);
Tensor sum(Tape& tape, const Tensor& x);

// Gathers rows of `table` ([vocab, d]) for each id. Gradients accumulate
// into the gathered rows only.
Tensor embedding_lookup(Tape& tape, const Tensor& table,
                        std::span<const int> ids);

// Builds [n, d] from n vectors of shape [d].
Tensor stack_rows(Tape& tape, std::span<const Tensor> rows);

Tensor row(Tape& tape, const Tensor& m, int i);
Tensor element(Tape& tape, const Tensor& v, int i);
Tensor slice_cols(Tape& tape, const Tensor& x, int start, int len);

// Normalization over the last (only) axis of a vector with learned gain
// and bias.
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain,
                  const Tensor& bias);

// Softmax cross-entropy of a logit vector against a target index,
// computed via log-sum-exp for stability.
Tensor cross_entropy(Tape& tape, const Tensor& logits, int target);

// Inverted dropout: training mode zeroes elements with probability p and
// scales survivors by 1/(1-p); evaluation mode is the identity.
Tensor dropout(Tape& tape, const Tensor& x, double p, bool training, Rng& rng);

}  // namespace ops

// Generic entry point over the named primitive set. `axis` applies to
// softmax/mean; scale reads its factor from a scalar second input and
// embedding-lookup reads ids from the rounded values of its second input.
Tensor apply_primitive(Tape& tape, PrimitiveKind kind,
                       std::span<const Tensor> inputs, int axis = -1);

// Test hook: multiplies the named primitive's input gradient by `factor`
// during backward. factor == 1 clears the fault.
void set_gradient_fault(const std::string& op, double factor);

// Max over components of |analytic - numeric| / max(|analytic|, |numeric|,
// 1e-8), with numeric gradients from central differences of f.
double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                  Tensor x, double eps);

}  // namespace knowdial
