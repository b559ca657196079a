#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace tapermode {

struct ModeAssignment {
  // permutation[label] = column of `current` that continues mode `label`.
  std::vector<int> permutation;
  // +1 or -1 per label; multiply the matched current column to make its
  // overlap with the previous one positive.
  std::vector<int> signs;
  double min_overlap = 1.0;
};

// Hungarian algorithm (shortest augmenting path form) on an n x n cost
// matrix. Returns row -> column assignment minimizing total cost.
inline std::vector<int> solve_min_cost_assignment(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> row_pot(n + 1, 0.0), col_pot(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);  // match[col] = row, 1-based

  for (int row = 1; row <= n; ++row) {
    match[0] = row;
    int col0 = 0;
    std::vector<double> min_slack(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[col0] = true;
      const int r0 = match[col0];
      double delta = inf;
      int col1 = 0;
      for (int c = 1; c <= n; ++c) {
        if (used[c]) continue;
        const double reduced = cost(r0 - 1, c - 1) - row_pot[r0] - col_pot[c];
        if (reduced < min_slack[c]) {
          min_slack[c] = reduced;
          way[c] = col0;
        }
        if (min_slack[c] < delta) {
          delta = min_slack[c];
          col1 = c;
        }
      }
      for (int c = 0; c <= n; ++c) {
        if (used[c]) {
          row_pot[match[c]] += delta;
          col_pot[c] -= delta;
        } else {
          min_slack[c] -= delta;
        }
      }
      col0 = col1;
    } while (match[col0] != 0);
    do {
      const int col1 = way[col0];
      match[col0] = match[col1];
      col0 = col1;
    } while (col0 != 0);
  }

  std::vector<int> assignment(n, -1);
  for (int c = 1; c <= n; ++c) assignment[match[c] - 1] = c - 1;
  return assignment;
}

// Match each previous mode (column) to the current mode maximizing the total
// |overlap|, then fix signs so matched overlaps are positive.
inline ModeAssignment mode_overlap_assignment(const Eigen::MatrixXd& previous,
                                              const Eigen::MatrixXd& current) {
  const Eigen::MatrixXd overlap = previous.transpose() * current;
  const Eigen::MatrixXd cost = -overlap.cwiseAbs();

  ModeAssignment out;
  out.permutation = solve_min_cost_assignment(cost);
  out.signs.resize(out.permutation.size());
  out.min_overlap = previous.cols() > 0 ? std::numeric_limits<double>::infinity() : 1.0;
  for (std::size_t label = 0; label < out.permutation.size(); ++label) {
    const double o = overlap(static_cast<Eigen::Index>(label), out.permutation[label]);
    out.signs[label] = o < 0.0 ? -1 : 1;
    out.min_overlap = std::min(out.min_overlap, std::abs(o));
  }
  return out;
}

}  // namespace tapermode
