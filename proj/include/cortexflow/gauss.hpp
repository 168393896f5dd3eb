#pragma once

#include <vector>

namespace cortexflow {

// Gauss-Legendre rule on [0, 1]. Nodes never include the endpoints.
struct GaussRule {
  std::vector<double> x;
  std::vector<double> w;
  int size() const { return static_cast<int>(x.size()); }
};

// n-point rule, exact for polynomials up to degree 2n-1. Cached internally.
const GaussRule& gauss_rule(int n);

// Number of points needed per axis for the given polynomial order.
inline int gauss_points_for_order(int order) { return order / 2 + 1; }

}  // namespace cortexflow
