#pragma once

#include <vector>

#include "textres/nn/graph.hpp"

namespace textres::nn {

Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var scale(Graph& g, Var a, double s);
/// a * s where s is a single-element node.
Var mul_scalar(Graph& g, Var a, Var s);
/// x + alpha * branch. When alpha is exactly zero the result is a copy of x
/// and nothing is propagated into branch.
Var scaled_residual(Graph& g, Var x, Var alpha, Var branch);
Var reshape(Graph& g, Var a, std::vector<int> shape);

/// y = W x + b. x is read flat (length n); W is (m, n); b is (m) or invalid.
Var linear(Graph& g, Var x, Var weight, Var bias);
/// (m, k) x (k, n) with optional transposes of either operand.
Var matmul(Graph& g, Var a, Var b, bool transpose_a = false, bool transpose_b = false);
Var softmax_rows(Graph& g, Var a);

Var gelu(Graph& g, Var x);

/// HWC convolution. weight is (k, k, cin, cout); bias is (cout) or invalid.
Var conv2d(Graph& g, Var x, Var weight, Var bias, int stride, int pad);
Var concat_channels(Graph& g, Var a, Var b);
Var upsample_nearest2(Graph& g, Var x);
Var resize_bilinear(Graph& g, Var x, int out_h, int out_w);
/// out pixel i copies source pixel src[i] (flat y * W + x) verbatim.
Var gather_pixels(Graph& g, Var x, const std::vector<int>& src, int out_h, int out_w);

Var sum(Graph& g, Var a);
Var mean_square(Graph& g, Var a);
/// mean |a - b|; the subgradient at zero is zero.
Var mean_abs_diff(Graph& g, Var a, Var b);

}  // namespace textres::nn
