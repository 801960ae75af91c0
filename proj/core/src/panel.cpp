#include "latentflow/panel.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>

#include "latentflow/errors.hpp"

namespace latentflow {

FeedPanel FeedPanel::from_fills(std::vector<std::string> station_ids,
                                std::vector<std::string> time_labels, std::vector<Fill> prev,
                                std::vector<Fill> curr) {
  const std::size_t n = station_ids.size();
  const std::size_t t_len = time_labels.size();
  if (prev.size() != n * t_len || curr.size() != n * t_len) {
    throw DataError("panel: fill matrices must be stations x timepoints");
  }
  FeedPanel panel;
  panel.station_ids_ = std::move(station_ids);
  panel.time_labels_ = std::move(time_labels);
  panel.diffs_.assign((n + 1) * t_len, 0);
  panel.observed_.assign((n + 1) * t_len, 0);
  for (std::size_t k = 0; k < n * t_len; ++k) {
    if (prev[k] && curr[k]) {
      const std::int64_t d = *curr[k] - *prev[k];
      if (d > std::numeric_limits<int>::max() || d < std::numeric_limits<int>::min()) {
        throw DataError("panel: fill difference out of range");
      }
      panel.diffs_[k] = static_cast<int>(d);
      panel.observed_[k] = 1;
    }
  }
  panel.prev_ = std::move(prev);
  panel.curr_ = std::move(curr);
  panel.assemble_latent_row();
  return panel;
}

FeedPanel FeedPanel::from_differences(std::vector<std::string> station_ids,
                                      std::vector<std::string> time_labels,
                                      std::vector<int> diffs, std::vector<bool> observed) {
  const std::size_t n = station_ids.size();
  const std::size_t t_len = time_labels.size();
  if (diffs.size() != n * t_len || (!observed.empty() && observed.size() != n * t_len)) {
    throw DataError("panel: difference matrix must be stations x timepoints");
  }
  FeedPanel panel;
  panel.station_ids_ = std::move(station_ids);
  panel.time_labels_ = std::move(time_labels);
  panel.diffs_.assign((n + 1) * t_len, 0);
  panel.observed_.assign((n + 1) * t_len, 0);
  for (std::size_t k = 0; k < n * t_len; ++k) {
    const bool present = observed.empty() || observed[k];
    panel.diffs_[k] = present ? diffs[k] : 0;
    panel.observed_[k] = present ? 1 : 0;
  }
  panel.assemble_latent_row();
  return panel;
}

void FeedPanel::assemble_latent_row() {
  const int n = num_stations();
  const int t_len = num_timepoints();
  for (int t = 0; t < t_len; ++t) {
    long total = 0;
    for (int i = 0; i < n; ++i) {
      if (observed(i, t)) total += diffs_[index(i, t)];
    }
    diffs_[index(n, t)] = static_cast<int>(-total);
    observed_[index(n, t)] = 1;
  }
}

FeedPanel::Fill FeedPanel::fill(int i, int t) const {
  if (curr_.empty()) return std::nullopt;
  return curr_[index(i, t)];
}

FeedPanel::Fill FeedPanel::prev_fill(int i, int t) const {
  if (prev_.empty()) return std::nullopt;
  return prev_[index(i, t)];
}

double FeedPanel::mean_abs_difference() const {
  double total = 0.0;
  long count = 0;
  for (int i = 0; i < num_stations(); ++i) {
    for (int t = 0; t < num_timepoints(); ++t) {
      if (observed(i, t)) {
        total += std::abs(diff(i, t));
        ++count;
      }
    }
  }
  return count > 0 ? total / static_cast<double>(count) : 0.0;
}

}  // namespace latentflow
