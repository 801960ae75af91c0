#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace latentflow {

/// Fill differences for N physical stations plus the latent in-transit station.
///
/// Row index N of the difference matrix is the latent station; its value at t
/// is minus the sum of the observed physical differences at t. A physical
/// cell is missing when either of the two fills that define it is missing.
class FeedPanel {
 public:
  using Fill = std::optional<std::int64_t>;

  FeedPanel() = default;

  /// Builds the panel from fills at t-1 (prev) and t (curr), both N x T in
  /// row-major station order.
  static FeedPanel from_fills(std::vector<std::string> station_ids,
                              std::vector<std::string> time_labels, std::vector<Fill> prev,
                              std::vector<Fill> curr);

  /// Builds the panel directly from N x T physical differences (row-major);
  /// observed may be empty, meaning all cells are present.
  static FeedPanel from_differences(std::vector<std::string> station_ids,
                                    std::vector<std::string> time_labels, std::vector<int> diffs,
                                    std::vector<bool> observed = {});

  [[nodiscard]] int num_stations() const { return static_cast<int>(station_ids_.size()); }
  [[nodiscard]] int num_timepoints() const { return static_cast<int>(time_labels_.size()); }
  [[nodiscard]] int latent_index() const { return num_stations(); }
  [[nodiscard]] const std::vector<std::string>& station_ids() const { return station_ids_; }
  [[nodiscard]] const std::vector<std::string>& time_labels() const { return time_labels_; }

  /// i in 0..N (N is the latent station).
  [[nodiscard]] bool observed(int i, int t) const { return observed_[index(i, t)] != 0; }
  [[nodiscard]] int diff(int i, int t) const { return diffs_[index(i, t)]; }

  [[nodiscard]] bool has_fills() const { return !curr_.empty(); }
  [[nodiscard]] Fill fill(int i, int t) const;
  [[nodiscard]] Fill prev_fill(int i, int t) const;

  /// Mean absolute physical difference over observed cells.
  [[nodiscard]] double mean_abs_difference() const;

 private:
  void assemble_latent_row();
  [[nodiscard]] std::size_t index(int i, int t) const {
    return static_cast<std::size_t>(i) * time_labels_.size() + static_cast<std::size_t>(t);
  }

  std::vector<std::string> station_ids_;
  std::vector<std::string> time_labels_;
  std::vector<int> diffs_;             // (N+1) x T
  std::vector<std::uint8_t> observed_; // (N+1) x T
  std::vector<Fill> prev_;             // N x T, empty when built from differences
  std::vector<Fill> curr_;
};

}  // namespace latentflow
