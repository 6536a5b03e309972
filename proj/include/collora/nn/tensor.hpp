#pragma once

#include <Eigen/Dense>

namespace collora {

// Row-major dense storage; a batch of 2-D points is a B x 2 Mat.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Vec = Eigen::VectorXd;
using Vec2 = Eigen::Vector2d;

inline bool all_finite(const Mat& m) { return m.allFinite(); }

inline Vec2 row2(const Mat& m, Eigen::Index r) { return {m(r, 0), m(r, 1)}; }

inline Mat points(std::initializer_list<Vec2> pts) {
  Mat m(static_cast<Eigen::Index>(pts.size()), 2);
  Eigen::Index r = 0;
  for (const auto& p : pts) {
    m(r, 0) = p.x();
    m(r, 1) = p.y();
    ++r;
  }
  return m;
}

}  // namespace collora
