#include "retinn/locations.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

namespace retinn {

using nlohmann::json;

int sector_index(const std::string& name) {
  for (std::size_t i = 0; i < kSectorNames.size(); ++i)
    if (name == kSectorNames[i]) return static_cast<int>(i);
  return -1;
}

double VfLocation::center_distance_units() const {
  return std::hypot(x_units(), y_units());
}

namespace {

// blind-spot column of the right-eye 24-2 chart (15 degrees temporal)
constexpr double kBlindSpotColumnDeg = 15.0;

std::string classify_sector(double xu, double yu) {
  // Editable approximation of the six-sector visual-field grouping: the
  // twelve innermost locations form the central sector, the rest split by
  // chart angle (temporal side carries the blind spot at +x).
  double d = std::hypot(xu, yu);
  if (d < 1.66) return "central";
  double ang = std::atan2(yu, xu) * 180.0 / 3.14159265358979323846;
  if (ang >= -45.0 && ang < 45.0) return "temporal";
  if (ang >= 45.0 && ang < 112.5) return "superior";
  if (ang >= 112.5 && ang <= 180.0) return "superior_nasal";
  if (ang >= -112.5 && ang < -45.0) return "inferior";
  return "inferior_nasal";
}

}  // namespace

LocationTable LocationTable::builtin() {
  struct Raw {
    double xu, yu;
  };
  std::vector<Raw> pts;
  auto row = [&](double yu, double x_lo, double x_hi) {
    for (double xu = x_lo; xu <= x_hi + 1e-9; xu += 1.0) pts.push_back({xu, yu});
  };
  row(3.5, -1.5, 1.5);
  row(2.5, -2.5, 2.5);
  row(1.5, -3.5, 3.5);
  row(0.5, -4.5, 3.5);
  row(-0.5, -4.5, 3.5);
  row(-1.5, -3.5, 3.5);
  row(-2.5, -2.5, 2.5);
  row(-3.5, -1.5, 1.5);
  // drop the two blind-spot locations at (+2.5, +-0.5)
  std::erase_if(pts, [](const Raw& p) {
    return std::abs(p.xu - 2.5) < 1e-9 && std::abs(std::abs(p.yu) - 0.5) < 1e-9;
  });
  // canonical order: top row first, left to right
  std::sort(pts.begin(), pts.end(), [](const Raw& a, const Raw& b) {
    if (a.yu != b.yu) return a.yu > b.yu;
    return a.xu < b.xu;
  });

  LocationTable table;
  table.locs_.resize(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    VfLocation& l = table.locs_[i];
    l.x_deg = pts[i].xu * kGridSpacingDeg;
    l.y_deg = pts[i].yu * kGridSpacingDeg;
    l.hemifield = pts[i].yu > 0 ? Hemifield::superior : Hemifield::inferior;
    l.sector = classify_sector(pts[i].xu, pts[i].yu);
  }

  // Pass/slot schedule per hemifield: locations ordered by ascending distance
  // from the blind-spot column, chunked 5,4,4,4,4,4,1 onto passes; slots
  // within a pass ordered by vertical position (top first).
  const double bs = kBlindSpotColumnDeg / kGridSpacingDeg;
  for (Hemifield h : {Hemifield::superior, Hemifield::inferior}) {
    std::vector<int> idx;
    for (std::size_t i = 0; i < table.locs_.size(); ++i)
      if (table.locs_[i].hemifield == h) idx.push_back(static_cast<int>(i));
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
      const VfLocation& la = table.locs_[static_cast<std::size_t>(a)];
      const VfLocation& lb = table.locs_[static_cast<std::size_t>(b)];
      double da = std::abs(la.x_units() - bs);
      double db = std::abs(lb.x_units() - bs);
      if (da != db) return da < db;
      if (std::abs(la.y_units()) != std::abs(lb.y_units()))
        return std::abs(la.y_units()) < std::abs(lb.y_units());
      return la.x_units() < lb.x_units();
    });
    int cursor = 0;
    for (int pass = 1; pass <= kRecursivePasses; ++pass) {
      int kept = kKeptSlots[static_cast<std::size_t>(pass - 1)];
      std::vector<int> chunk(idx.begin() + cursor, idx.begin() + cursor + kept);
      cursor += kept;
      std::sort(chunk.begin(), chunk.end(), [&](int a, int b) {
        const VfLocation& la = table.locs_[static_cast<std::size_t>(a)];
        const VfLocation& lb = table.locs_[static_cast<std::size_t>(b)];
        if (la.y_deg != lb.y_deg) return la.y_deg > lb.y_deg;
        return la.x_deg < lb.x_deg;
      });
      for (int s = 0; s < kept; ++s) {
        table.locs_[static_cast<std::size_t>(chunk[static_cast<std::size_t>(s)])].pass = pass;
        table.locs_[static_cast<std::size_t>(chunk[static_cast<std::size_t>(s)])].slot = s;
      }
    }
  }
  table.validate();
  return table;
}

void LocationTable::validate() const {
  if (locs_.size() != kVfLocations)
    throw ConfigError("location table must have exactly 52 entries, got " +
                      std::to_string(locs_.size()));
  int kept_total = 0;
  for (int k : kKeptSlots) kept_total += k;
  if (kept_total != kHemifieldLocations)
    throw ConfigError("kept slot counts must sum to 26");
  std::array<int, 6> sector_counts{};
  for (Hemifield h : {Hemifield::superior, Hemifield::inferior}) {
    std::set<std::pair<int, int>> seen;
    int count = 0;
    for (const VfLocation& l : locs_) {
      if (l.hemifield != h) continue;
      ++count;
      if (l.pass < 1 || l.pass > kRecursivePasses)
        throw ConfigError("location pass out of range");
      int kept = kKeptSlots[static_cast<std::size_t>(l.pass - 1)];
      if (l.slot < 0 || l.slot >= kept)
        throw ConfigError("location slot " + std::to_string(l.slot) +
                          " outside kept prefix of pass " + std::to_string(l.pass));
      if (!seen.emplace(l.pass, l.slot).second)
        throw ConfigError("duplicate (pass, slot) assignment in schedule");
    }
    if (count != kHemifieldLocations)
      throw ConfigError("hemifield must contain exactly 26 locations");
    if (static_cast<int>(seen.size()) != kHemifieldLocations)
      throw ConfigError("schedule is not a bijection onto kept (pass, slot) pairs");
  }
  for (const VfLocation& l : locs_) {
    int s = sector_index(l.sector);
    if (s < 0) throw ConfigError("unknown sector name: '" + l.sector + "'");
    ++sector_counts[static_cast<std::size_t>(s)];
    if ((l.hemifield == Hemifield::superior) != (l.y_deg > 0))
      throw ConfigError("hemifield flag disagrees with y coordinate");
  }
  for (std::size_t i = 0; i < sector_counts.size(); ++i)
    if (sector_counts[i] == 0)
      throw ConfigError("sector '" + std::string(kSectorNames[i]) + "' is empty");
}

std::vector<int> LocationTable::hemifield_indices(Hemifield h) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < locs_.size(); ++i)
    if (locs_[i].hemifield == h) out.push_back(static_cast<int>(i));
  return out;
}

int LocationTable::index_for(Hemifield h, int pass, int slot) const {
  for (std::size_t i = 0; i < locs_.size(); ++i) {
    const VfLocation& l = locs_[i];
    if (l.hemifield == h && l.pass == pass && l.slot == slot)
      return static_cast<int>(i);
  }
  throw ConfigError("no location for pass " + std::to_string(pass) + " slot " +
                    std::to_string(slot));
}

std::vector<double> LocationTable::center_distances_units() const {
  std::vector<double> d;
  d.reserve(locs_.size());
  for (const VfLocation& l : locs_) d.push_back(l.center_distance_units());
  return d;
}

std::string LocationTable::to_json_text() const {
  json arr = json::array();
  for (std::size_t i = 0; i < locs_.size(); ++i) {
    const VfLocation& l = locs_[i];
    arr.push_back({{"index", i},
                   {"x_deg", l.x_deg},
                   {"y_deg", l.y_deg},
                   {"hemifield", l.hemifield == Hemifield::superior ? "superior" : "inferior"},
                   {"pass", l.pass},
                   {"slot", l.slot},
                   {"sector", l.sector}});
  }
  json root = {{"schema_version", 1}, {"grid_spacing_deg", kGridSpacingDeg}, {"locations", arr}};
  return root.dump(2) + "\n";
}

LocationTable LocationTable::from_json_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("location table is not valid JSON: ") + e.what());
  }
  if (!root.contains("schema_version") || root["schema_version"] != 1)
    throw ConfigError("location table missing or unsupported schema_version");
  LocationTable table;
  table.locs_.resize(kVfLocations);
  std::vector<bool> seen(kVfLocations, false);
  for (const json& e : root.at("locations")) {
    int idx = e.at("index").get<int>();
    if (idx < 0 || idx >= kVfLocations)
      throw ConfigError("location index out of range: " + std::to_string(idx));
    if (seen[static_cast<std::size_t>(idx)])
      throw ConfigError("duplicate location index: " + std::to_string(idx));
    seen[static_cast<std::size_t>(idx)] = true;
    VfLocation& l = table.locs_[static_cast<std::size_t>(idx)];
    l.x_deg = e.at("x_deg").get<double>();
    l.y_deg = e.at("y_deg").get<double>();
    std::string h = e.at("hemifield").get<std::string>();
    if (h != "superior" && h != "inferior")
      throw ConfigError("bad hemifield value: '" + h + "'");
    l.hemifield = h == "superior" ? Hemifield::superior : Hemifield::inferior;
    l.pass = e.at("pass").get<int>();
    l.slot = e.at("slot").get<int>();
    l.sector = e.at("sector").get<std::string>();
  }
  for (bool s : seen)
    if (!s) throw ConfigError("location table does not cover all 52 indices");
  table.validate();
  return table;
}

LocationTable LocationTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open location table: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return from_json_text(text);
}

void LocationTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write location table: " + path.string());
  out << to_json_text();
}

}  // namespace retinn
