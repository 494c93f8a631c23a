#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "retinn/data.hpp"
#include "retinn/locations.hpp"
#include "retinn/model.hpp"

namespace retinn {

// Assignment of each location to one of the six visual-field sectors; total
// and with every sector non-empty. Normally read off the location table.
class SectorMap {
 public:
  static SectorMap from_table(const LocationTable& table);
  static SectorMap load(const std::filesystem::path& path);

  int sector_of(int location) const { return sector_[static_cast<std::size_t>(location)]; }
  const std::vector<int>& members(int sector) const {
    return members_[static_cast<std::size_t>(sector)];
  }

 private:
  std::array<int, kVfLocations> sector_{};
  std::array<std::vector<int>, 6> members_;
  void index_members();
};

struct MaeStat {
  double mae = 0.0;
  double se = 0.0;  // sample std of the per-test values / sqrt(count)
  std::size_t count = 0;
};

struct EvalReport {
  MaeStat overall_mae;
  std::array<std::optional<MaeStat>, 3> group_mae;  // empty groups stay absent
  std::array<MaeStat, 6> sector_mae;
  MaeStat md_mae;
  std::array<std::optional<double>, 3> group_md_mae_value;
  // per-sector R^2 on sectoral mean total deviation; absent when the targets
  // have zero variance
  std::array<std::optional<double>, 6> sector_r2;
  std::array<std::size_t, 3> group_counts{};

  std::string to_json_text() const;
  std::string to_csv_text() const;
};

// Per-test MAE over the 52 locations, aggregated overall and per group.
// group id -1 marks a test excluded from group statistics.
struct PointwiseMae {
  MaeStat overall;
  std::array<std::optional<MaeStat>, 3> per_group;
};
PointwiseMae pointwise_mae(std::span<const double> preds,
                           std::span<const double> targets,
                           std::span<const Group> groups);

std::array<double, 6> sectoral_averages(std::span<const double> vf,
                                        const SectorMap& map);

// 1 - SS_res / SS_tot about the target mean; absent on zero target variance
std::optional<double> r2(std::span<const double> preds, std::span<const double> targets);

using PredictFn = std::function<Prediction(const PairedExam&)>;

// Runs the predictor over every exam, groups tests by their true MD and fills
// the report. Throws ConfigError on an empty test set.
EvalReport evaluate(const PredictFn& predict, const std::vector<PairedExam>& test_set,
                    const SectorMap& sectors);

// Plot-data export: MD histogram bins (CSV: bin_low,bin_high,count)
std::string md_histogram_csv(const std::vector<PairedExam>& exams, double bin_width = 2.0);

}  // namespace retinn
