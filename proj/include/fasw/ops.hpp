#pragma once

#include <span>
#include <vector>

#include "fasw/autograd.hpp"

namespace fasw::ad {

// Elementwise, equal shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
/// x * s where s is a one-element Var.
Var mul_scalar_var(const Var& x, const Var& s);

Var abs(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
Var sigmoid(const Var& a);
Var leaky_relu(const Var& a, double slope);
/// Identity inside [lo, hi]; clamped entries pass no gradient.
Var clamp(const Var& a, double lo, double hi);

Var sum(const Var& a);
Var mean(const Var& a);

/// Weighted sum of one-element Vars.
Var weighted_sum(std::span<const Var> terms, std::span<const double> weights);

Var reshape(const Var& a, Shape shape);

/// x: N x C x H x W, w: O x C x k x k, b: O. Zero padding.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);

/// Half-pixel bilinear resampling of an NCHW tensor.
Var resize_bilinear(const Var& x, int out_h, int out_w);
/// Non-overlapping average pooling by an integer factor.
Var avg_pool(const Var& x, int factor);
/// Average-pool when shrinking by an integer factor, bilinear otherwise;
/// identity when the size already matches.
Var resize_to(const Var& x, int out_h, int out_w);

Var concat_channels(std::span<const Var> parts);
/// N x C x H x W -> N x C.
Var global_avg_pool(const Var& x);
/// x: N x D, w: O x D, b: O -> N x O.
Var linear(const Var& x, const Var& w, const Var& b);

/// Row-wise over N x K.
Var log_softmax_rows(const Var& x);
Var softmax_rows(const Var& x);

/// Mean binary cross-entropy of sigmoid(logits) against targets in [0,1].
Var bce_with_logits(const Var& logits, const Var& targets);

Var mean_abs_diff(const Var& a, const Var& b);
Var mean_squared_diff(const Var& a, const Var& b);

}  // namespace fasw::ad
