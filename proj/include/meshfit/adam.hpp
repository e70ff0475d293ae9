#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace meshfit {

// Standard ADAM with bias correction. beta1 = 0 turns the first moment into
// the raw gradient, which is the configuration used for offset fitting.
template <typename Mat>
struct AdamState {
  double lr = 1e-2;
  double beta1 = 0.0;
  double beta2 = 0.999;
  double eps = 1e-8;
  int step = 0;
  Mat m1;  // first moment, shaped like the variable
  Mat m2;  // second moment

  static AdamState like(const Mat& variable, double lr_) {
    AdamState s;
    s.lr = lr_;
    s.m1 = Mat::Zero(variable.rows(), variable.cols());
    s.m2 = Mat::Zero(variable.rows(), variable.cols());
    return s;
  }
};

template <typename Mat>
inline void adam_step(AdamState<Mat>& state, Mat& variable, const Mat& gradient) {
  if (gradient.rows() != variable.rows() || gradient.cols() != variable.cols())
    throw std::invalid_argument("adam_step: gradient shape mismatch");
  if (!gradient.allFinite()) throw std::runtime_error("diverged: non-finite gradient");
  state.step += 1;
  state.m1 = state.beta1 * state.m1 + (1.0 - state.beta1) * gradient;
  state.m2 = (state.beta2 * state.m2.array() +
              (1.0 - state.beta2) * gradient.array().square())
                 .matrix();
  const double c1 = 1.0 - std::pow(state.beta1, state.step);
  const double c2 = 1.0 - std::pow(state.beta2, state.step);
  variable.array() -=
      state.lr * (state.m1.array() / c1) / ((state.m2.array() / c2).sqrt() + state.eps);
}

}  // namespace meshfit
