// SPDX-License-Identifier: Apache-2.0
#include "maskfe/mask.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace maskfe {

PostProcess PostProcess::fixed(double alpha, double beta) {
  PostProcess pp;
  pp.per_frame = false;
  pp.alpha = alpha;
  pp.beta = beta;
  return pp;
}

PostProcess PostProcess::frame_wise(Arr alphas, double beta) {
  PostProcess pp;
  pp.per_frame = true;
  pp.alpha_frames = std::move(alphas);
  pp.beta = beta;
  return pp;
}

void PostProcess::validate(Eigen::Index frames) const {
  if (!(beta >= 0.0 && beta < 1.0))
    throw std::invalid_argument("postprocess: beta must lie in [0, 1)");
  if (per_frame) {
    if (alpha_frames.cols() != 1 || alpha_frames.rows() != frames)
      throw std::invalid_argument("postprocess: alpha vector length " +
                                  std::to_string(alpha_frames.rows()) + " does not match " +
                                  std::to_string(frames) + " frames");
    if (!((alpha_frames > 0.0) && (alpha_frames < 1.0)).all())
      throw std::invalid_argument("postprocess: per-frame alpha entries must lie in (0, 1)");
  } else {
    if (!(alpha >= 0.0 && alpha <= 1.0))
      throw std::invalid_argument("postprocess: fixed alpha must lie in [0, 1]");
  }
}

Mask ideal_ratio_mask(const MelSpectrogram& x, const MelSpectrogram& n) {
  if (x.frames() != n.frames() || x.bands() != n.bands())
    throw std::invalid_argument("ideal_ratio_mask: shape mismatch");
  if ((x.values < 0.0).any() || (n.values < 0.0).any())
    throw std::invalid_argument("ideal_ratio_mask: inputs must be nonnegative");
  Arr denom = x.values + n.values;
  Mask m;
  m.values = (denom > 0.0).select(x.values / denom.max(1e-300), Arr::Zero(x.frames(), x.bands()));
  return m;
}

Mask postprocess(const Mask& m_hat, const PostProcess& pp) {
  pp.validate(m_hat.frames());
  Mask out;
  out.values.resize(m_hat.frames(), m_hat.dims());
  for (Eigen::Index t = 0; t < m_hat.frames(); ++t) {
    double a = pp.per_frame ? pp.alpha_frames(t, 0) : pp.alpha;
    for (Eigen::Index c = 0; c < m_hat.dims(); ++c)
      out.values(t, c) = std::max(std::pow(m_hat.values(t, c), a), pp.beta);
  }
  return out;
}

Tensor postprocess_tensor(const Tensor& m_hat, const Tensor& alpha_col, double beta) {
  if (!(beta >= 0.0 && beta < 1.0))
    throw std::invalid_argument("postprocess_tensor: beta must lie in [0, 1)");
  return floor_max(pow(m_hat, alpha_col), beta);
}

Arr apply_mask(const Arr& y, const Mask& m_bar) {
  if (y.rows() != m_bar.frames() || y.cols() != m_bar.dims())
    throw std::invalid_argument("apply_mask: shape mismatch");
  return y * m_bar.values;
}

std::pair<double, double> distortion_residual(const Arr& x, const Arr& n, const Arr& m_bar) {
  if (x.rows() != n.rows() || x.cols() != n.cols() || x.rows() != m_bar.rows() ||
      x.cols() != m_bar.cols())
    throw std::invalid_argument("distortion_residual: shape mismatch");
  double distortion = (x * (1.0 - m_bar)).square().sum();
  double residual = (n * m_bar).square().sum();
  return {distortion, residual};
}

Mask stack_mask(const Mask& m, int stack, int subsample) {
  return Mask{stack_and_subsample(m.values, stack, subsample)};
}

}  // namespace maskfe
