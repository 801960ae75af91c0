#pragma once

#include <cstddef>
#include <vector>

namespace latentflow {

/// Trip counts between physical stations, N x N per timepoint.
struct TripTensor {
  int num_stations = 0;
  int num_timepoints = 0;
  std::vector<int> counts;  // index (t * N + i) * N + j

  TripTensor() = default;
  TripTensor(int n, int t_len)
      : num_stations(n),
        num_timepoints(t_len),
        counts(static_cast<std::size_t>(n) * static_cast<std::size_t>(n) *
                   static_cast<std::size_t>(t_len),
               0) {}

  [[nodiscard]] std::size_t index(int i, int j, int t) const {
    const auto n = static_cast<std::size_t>(num_stations);
    return (static_cast<std::size_t>(t) * n + static_cast<std::size_t>(i)) * n +
           static_cast<std::size_t>(j);
  }
  [[nodiscard]] int at(int i, int j, int t) const { return counts[index(i, j, t)]; }
  int& at(int i, int j, int t) { return counts[index(i, j, t)]; }
};

}  // namespace latentflow
