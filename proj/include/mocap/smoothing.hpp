#pragma once

#include <vector>

#include "mocap/types.hpp"

namespace mocap {

// Score-guided adaptive Savitzky-Golay filter parameters.
struct FilterSpec {
  int poly_order = 2;
  int w_min = 2;
  int w_max = 8;

  void validate() const;  // 0 < w_min <= w_max, poly_order < 2*w_min + 1
};

// Least-squares Savitzky-Golay coefficients c_{-w..w}: symmetric, sum to 1,
// reproduce the window-center value of the best-fit degree-p polynomial.
Eigen::VectorXd sg_coefficients(int half_width, int poly_order);

// Coefficients that evaluate the window's LS polynomial away from the center
// (eval_offset in [-w, w]); used for boundary frames.
Eigen::VectorXd sg_eval_coefficients(int half_width, int poly_order, int eval_offset);

// Piecewise-linear, monotone non-increasing map from mean window confidence
// to an integer half-width in [w_min, w_max].
int adaptive_half_width(const Eigen::VectorXd& window_confidences, const FilterSpec& spec);

// Per keypoint channel, per frame: probe-window confidence picks the
// half-width, mirror padding at the boundaries, confidences pass through.
std::vector<KeypointFrame2D> smooth_keypoints(const std::vector<KeypointFrame2D>& frames,
                                              const FilterSpec& spec);

}  // namespace mocap
