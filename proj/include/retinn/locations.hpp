#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "retinn/common.hpp"

namespace retinn {

enum class Hemifield { superior, inferior };

inline constexpr int kVfLocations = 52;
inline constexpr int kHemifieldLocations = 26;
inline constexpr int kRecursivePasses = 7;
inline constexpr std::array<int, 7> kKeptSlots = {5, 4, 4, 4, 4, 4, 1};
inline constexpr double kGridSpacingDeg = 6.0;

inline constexpr std::array<const char*, 6> kSectorNames = {
    "central", "temporal", "inferior", "inferior_nasal", "superior", "superior_nasal"};

int sector_index(const std::string& name);  // -1 when unknown

// One tested visual-field location. Coordinates are chart degrees (right-eye
// convention, 6 degrees between adjacent locations); pass/slot address the
// recursive output schedule; sector names one of kSectorNames.
struct VfLocation {
  double x_deg = 0.0;
  double y_deg = 0.0;
  Hemifield hemifield = Hemifield::superior;
  int pass = 1;   // 1..7
  int slot = 0;   // 0..4, kept slots are the prefix of each pass
  std::string sector;

  double x_units() const { return x_deg / kGridSpacingDeg; }
  double y_units() const { return y_deg / kGridSpacingDeg; }
  // distance from the field center in grid units (adjacent locations are 1 apart)
  double center_distance_units() const;
};

// The canonical 52-location table: the 24-2 grid minus the two blind-spot
// locations, ordered top row first, left to right. Superior hemifield
// locations occupy indices 0..25, inferior 26..51. The table doubles as the
// pass/slot schedule and the sector map; it is shipped as editable JSON.
class LocationTable {
 public:
  static LocationTable builtin();
  static LocationTable load(const std::filesystem::path& path);
  static LocationTable from_json_text(const std::string& text);
  void save(const std::filesystem::path& path) const;
  std::string to_json_text() const;

  const VfLocation& at(int index) const { return locs_[static_cast<std::size_t>(index)]; }
  int size() const { return static_cast<int>(locs_.size()); }

  // canonical indices of one hemifield, in canonical order (26 entries)
  std::vector<int> hemifield_indices(Hemifield h) const;

  // canonical index of the location owning (hemifield, pass, slot); the
  // schedule is validated to be a bijection onto the kept (pass, slot) pairs
  int index_for(Hemifield h, int pass, int slot) const;

  std::vector<double> center_distances_units() const;  // 52 entries

  // throws ConfigError naming the violated constraint
  void validate() const;

 private:
  std::vector<VfLocation> locs_;
};

}  // namespace retinn
