// SPDX-License-Identifier: Apache-2.0
//
// Ideal-ratio-mask targets, mask post-processing with fixed or per-frame
// scalars, and application of the post-processed mask to noisy features.
#pragma once

#include "maskfe/features.hpp"
#include "maskfe/tensor.hpp"

#include <utility>

namespace maskfe {

// Time-frequency mask, frames x dims, every value in [0, 1].
struct Mask {
  Arr values;
  Eigen::Index frames() const { return values.rows(); }
  Eigen::Index dims() const { return values.cols(); }
};

struct PostProcess {
  bool per_frame = false;
  double alpha = 0.5;   // fixed exponent in [0, 1] when !per_frame
  Arr alpha_frames;     // frames x 1, entries in (0, 1), when per_frame
  double beta = 0.01;   // mask floor in [0, 1)

  static PostProcess fixed(double alpha, double beta = 0.01);
  static PostProcess frame_wise(Arr alphas, double beta = 0.01);
  void validate(Eigen::Index frames) const;
};

// M(t,c) = X/(X+N) with 0/0 := 0.
Mask ideal_ratio_mask(const MelSpectrogram& x, const MelSpectrogram& n);

// out(t,c) = max(m_hat(t,c)^alpha_t, beta). Accepts zeros in m_hat
// (0^a := 0 for a > 0), so oracle masks pass through unchanged logic.
Mask postprocess(const Mask& m_hat, const PostProcess& pp);

// Differentiable variant used by the model path; m_hat must be strictly
// positive (sigmoid output), alpha is a frames x 1 column.
Tensor postprocess_tensor(const Tensor& m_hat, const Tensor& alpha_col, double beta);

// X_hat = Y .* M_bar.
Arr apply_mask(const Arr& y, const Mask& m_bar);

// (distortion, residual) = (|X .* (1 - M)|_2^2, |N .* M|_2^2).
std::pair<double, double> distortion_residual(const Arr& x, const Arr& n, const Arr& m_bar);

// Per-frame mask brought to the stacked/subsampled training geometry.
Mask stack_mask(const Mask& m, int stack, int subsample);

}  // namespace maskfe
