#pragma once

// Data shared between the simulator, the scorer and the backbone.

#include "toc3d/numerics.hpp"

#include <vector>

namespace toc3d {

struct TokenCoord {
  int view = 0;
  int row = 0;
  int col = 0;
  friend bool operator==(const TokenCoord&, const TokenCoord&) = default;
};

/// Multi-view patch lattice. Token i is laid out view-major, then row-major
/// within a view; heatmap targets use the same flattening.
struct TokenLattice {
  int views = 0;
  int rows = 0;
  int cols = 0;

  int per_view() const { return rows * cols; }
  int size() const { return views * rows * cols; }
  int index(int view, int row, int col) const { return (view * rows + row) * cols + col; }
  int index(const TokenCoord& c) const { return index(c.view, c.row, c.col); }
  TokenCoord coord(int i) const { return {i / per_view(), (i % per_view()) / cols, i % cols}; }
  std::vector<TokenCoord> coords() const;

  friend bool operator==(const TokenLattice&, const TokenLattice&) = default;
};

struct TokenGrid {
  Matrix tokens;  // N x C
  TokenLattice lattice;

  int size() const { return static_cast<int>(tokens.rows()); }
  int dim() const { return static_cast<int>(tokens.cols()); }
  void validate() const;
};

using RefpointMatrix = Eigen::Matrix<double, Eigen::Dynamic, 4, Eigen::RowMajor>;

/// Decoder queries carried over from a history frame.
struct HistoryQuerySet {
  Matrix contents;             // N x C_q
  RefpointMatrix refpoints;    // N x 4, homogeneous, history ego frame
  Matrix velocities;           // N x 3, m/s
  std::vector<double> confidences;
  std::vector<double> dt;      // seconds, per query
  Mat4 ego_transform = Mat4::Identity();  // history ego -> current ego
  std::vector<int> object_ids; // source object, -1 for background queries

  int size() const { return static_cast<int>(contents.rows()); }
  int content_dim() const { return static_cast<int>(contents.cols()); }
  void validate() const;
  /// Rows picked in the given order.
  HistoryQuerySet select(const std::vector<int>& rows) const;
};

/// Per-token supervision aligned with TokenGrid ordering.
struct HeatmapTarget {
  TokenLattice lattice;
  std::vector<double> values;

  double at(int view, int row, int col) const { return values[lattice.index(view, row, col)]; }
};

bool is_rigid(const Mat4& m, double tol = 1e-9);

}  // namespace toc3d
