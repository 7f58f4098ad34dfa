#include "toc3d/types.hpp"

#include <cmath>

namespace toc3d {

std::vector<TokenCoord> TokenLattice::coords() const {
  std::vector<TokenCoord> out;
  out.reserve(size());
  for (int i = 0; i < size(); ++i) out.push_back(coord(i));
  return out;
}

void TokenGrid::validate() const {
  if (tokens.rows() != lattice.size()) {
    throw ShapeError("token grid: " + std::to_string(tokens.rows()) + " tokens for a lattice of " +
                     std::to_string(lattice.size()));
  }
}

void HistoryQuerySet::validate() const {
  const auto n = contents.rows();
  if (refpoints.rows() != n || velocities.rows() != n || velocities.cols() != 3 ||
      static_cast<Eigen::Index>(confidences.size()) != n ||
      static_cast<Eigen::Index>(dt.size()) != n ||
      static_cast<Eigen::Index>(object_ids.size()) != n) {
    throw ShapeError("history query set: inconsistent row counts");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (refpoints(i, 3) != 1.0) throw std::invalid_argument("history query set: refpoint w != 1");
    if (!(confidences[i] >= 0.0 && confidences[i] <= 1.0)) {
      throw std::invalid_argument("history query set: confidence outside [0,1]");
    }
  }
  if (!is_rigid(ego_transform)) throw std::invalid_argument("history query set: ego transform not rigid");
}

HistoryQuerySet HistoryQuerySet::select(const std::vector<int>& rows) const {
  HistoryQuerySet out;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.contents.resize(n, contents.cols());
  out.refpoints.resize(n, 4);
  out.velocities.resize(n, 3);
  out.ego_transform = ego_transform;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int r = rows[i];
    out.contents.row(i) = contents.row(r);
    out.refpoints.row(i) = refpoints.row(r);
    out.velocities.row(i) = velocities.row(r);
    out.confidences.push_back(confidences[r]);
    out.dt.push_back(dt[r]);
    out.object_ids.push_back(object_ids[r]);
  }
  return out;
}

bool is_rigid(const Mat4& m, double tol) {
  const Mat3 r = m.topLeftCorner<3, 3>();
  if (((r.transpose() * r) - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  if (std::abs(r.determinant() - 1.0) > tol) return false;
  return m(3, 0) == 0.0 && m(3, 1) == 0.0 && m(3, 2) == 0.0 && m(3, 3) == 1.0;
}

}  // namespace toc3d
