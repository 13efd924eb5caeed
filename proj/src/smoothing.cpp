#include "mocap/smoothing.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "mocap/errors.hpp"

namespace mocap {

void FilterSpec::validate() const {
  if (!(0 < w_min && w_min <= w_max)) throw ValidationError("require 0 < w_min <= w_max");
  if (poly_order < 0 || poly_order >= 2 * w_min + 1) {
    throw ValidationError("poly_order must lie in [0, 2*w_min]");
  }
}

Eigen::VectorXd sg_eval_coefficients(int half_width, int poly_order, int eval_offset) {
  const int w = half_width;
  const int p = poly_order;
  if (w < 1) throw ValidationError("half width must be >= 1");
  if (p < 0 || p >= 2 * w + 1) throw ValidationError("poly order must be below window size");

  // Vandermonde over offsets -w..w; the LS polynomial evaluated at
  // eval_offset is e(x)^T (V^T V)^-1 V^T y, so the coefficients are that row.
  Eigen::MatrixXd v(2 * w + 1, p + 1);
  for (int i = -w; i <= w; ++i) {
    double x = 1.0;
    for (int k = 0; k <= p; ++k) {
      v(i + w, k) = x;
      x *= i;
    }
  }
  const Eigen::MatrixXd gram = v.transpose() * v;
  Eigen::VectorXd e(p + 1);
  double x = 1.0;
  for (int k = 0; k <= p; ++k) {
    e[k] = x;
    x *= eval_offset;
  }
  return v * gram.ldlt().solve(e);
}

Eigen::VectorXd sg_coefficients(int half_width, int poly_order) {
  return sg_eval_coefficients(half_width, poly_order, 0);
}

int adaptive_half_width(const Eigen::VectorXd& confidences, const FilterSpec& spec) {
  spec.validate();
  if ((confidences.array() < 0.0).any() || (confidences.array() > 1.0).any()) {
    throw ValidationError("confidences must lie in [0,1]");
  }
  const double mean = confidences.size() > 0 ? confidences.mean() : 1.0;
  const double w = spec.w_min + (1.0 - mean) * (spec.w_max - spec.w_min);
  return static_cast<int>(std::lround(w));
}

std::vector<KeypointFrame2D> smooth_keypoints(const std::vector<KeypointFrame2D>& frames,
                                              const FilterSpec& spec) {
  spec.validate();
  const int t_count = static_cast<int>(frames.size());
  if (t_count < 2 * spec.w_min + 1) {
    throw ValidationError("sequence shorter than the minimum filter window");
  }
  const int n_points = frames.front().count();
  for (const auto& f : frames) f.validate(n_points);

  std::vector<KeypointFrame2D> out = frames;
  for (int k = 0; k < n_points; ++k) {
    for (int t = 0; t < t_count; ++t) {
      // probe window: w_max neighborhood, mean-aggregated confidence
      const int lo = std::max(0, t - spec.w_max);
      const int hi = std::min(t_count - 1, t + spec.w_max);
      Eigen::VectorXd probe(hi - lo + 1);
      for (int i = lo; i <= hi; ++i) probe[i - lo] = frames[i].confidence[k];
      const int w = adaptive_half_width(probe, spec);

      // boundary frames anchor the full window inside the sequence and
      // evaluate the LS polynomial at the frame's offset, which keeps
      // degree-<=p polynomial trajectories exactly invariant
      const int start = std::clamp(t - w, 0, t_count - 1 - 2 * w);
      const Eigen::VectorXd c = sg_eval_coefficients(w, spec.poly_order, t - start - w);
      Vec2 acc = Vec2::Zero();
      for (int j = 0; j <= 2 * w; ++j) {
        acc += c[j] * frames[start + j].points.row(k).transpose();
      }
      out[t].points.row(k) = acc.transpose();
    }
  }
  return out;
}

}  // namespace mocap
