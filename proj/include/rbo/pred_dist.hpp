#pragma once

#include <vector>

namespace rbo {

// Per-candidate predictive mean and standard deviation, in query order.
struct PredDist {
  std::vector<double> mean;
  std::vector<double> std;
};

}  // namespace rbo
