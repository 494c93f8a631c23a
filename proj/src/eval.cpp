#include "retinn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace retinn {

using nlohmann::json;

SectorMap SectorMap::from_table(const LocationTable& table) {
  SectorMap m;
  for (int j = 0; j < kVfLocations; ++j) {
    int s = sector_index(table.at(j).sector);
    if (s < 0) throw ConfigError("unknown sector for location " + std::to_string(j));
    m.sector_[static_cast<std::size_t>(j)] = s;
  }
  m.index_members();
  return m;
}

SectorMap SectorMap::load(const std::filesystem::path& path) {
  return from_table(LocationTable::load(path));
}

void SectorMap::index_members() {
  for (auto& v : members_) v.clear();
  for (int j = 0; j < kVfLocations; ++j)
    members_[static_cast<std::size_t>(sector_[static_cast<std::size_t>(j)])].push_back(j);
  for (std::size_t s = 0; s < members_.size(); ++s)
    if (members_[s].empty())
      throw ConfigError("sector '" + std::string(kSectorNames[s]) + "' is empty");
}

namespace {

MaeStat stat_of(const std::vector<double>& per_test) {
  MaeStat s;
  s.count = per_test.size();
  if (per_test.empty()) return s;
  double sum = 0.0;
  for (double v : per_test) sum += v;
  s.mae = sum / static_cast<double>(per_test.size());
  if (per_test.size() > 1) {
    double var = 0.0;
    for (double v : per_test) var += (v - s.mae) * (v - s.mae);
    var /= static_cast<double>(per_test.size() - 1);
    s.se = std::sqrt(var) / std::sqrt(static_cast<double>(per_test.size()));
  }
  return s;
}

}  // namespace

PointwiseMae pointwise_mae(std::span<const double> preds,
                           std::span<const double> targets,
                           std::span<const Group> groups) {
  std::size_t n = groups.size();
  if (preds.size() != n * kVfLocations || targets.size() != n * kVfLocations)
    throw ConfigError("pointwise_mae shape mismatch");
  std::vector<double> all;
  std::array<std::vector<double>, 3> per_group;
  all.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int j = 0; j < kVfLocations; ++j)
      acc += std::abs(targets[i * kVfLocations + j] - preds[i * kVfLocations + j]);
    double mae = acc / kVfLocations;
    all.push_back(mae);
    per_group[static_cast<std::size_t>(groups[i])].push_back(mae);
  }
  PointwiseMae out;
  out.overall = stat_of(all);
  for (std::size_t g = 0; g < 3; ++g)
    if (!per_group[g].empty()) out.per_group[g] = stat_of(per_group[g]);
  return out;
}

std::array<double, 6> sectoral_averages(std::span<const double> vf,
                                        const SectorMap& map) {
  if (vf.size() != kVfLocations) throw ConfigError("sectoral_averages needs 52 values");
  std::array<double, 6> out{};
  for (int s = 0; s < 6; ++s) {
    const auto& mem = map.members(s);
    double acc = 0.0;
    for (int j : mem) acc += vf[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(s)] = acc / static_cast<double>(mem.size());
  }
  return out;
}

std::optional<double> r2(std::span<const double> preds, std::span<const double> targets) {
  if (preds.size() != targets.size() || targets.empty())
    throw ConfigError("r2 needs matching non-empty inputs");
  double mean = 0.0;
  for (double t : targets) mean += t;
  mean /= static_cast<double>(targets.size());
  double ss_tot = 0.0, ss_res = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    ss_tot += (targets[i] - mean) * (targets[i] - mean);
    ss_res += (targets[i] - preds[i]) * (targets[i] - preds[i]);
  }
  if (ss_tot == 0.0) return std::nullopt;
  return 1.0 - ss_res / ss_tot;
}

EvalReport evaluate(const PredictFn& predict, const std::vector<PairedExam>& test_set,
                    const SectorMap& sectors) {
  if (test_set.empty()) throw ConfigError("evaluate needs a non-empty test set");
  std::size_t n = test_set.size();
  std::vector<double> preds(n * kVfLocations), targets(n * kVfLocations);
  std::vector<Group> groups(n);
  std::vector<double> md_err;
  std::array<std::vector<double>, 3> md_err_group;
  std::array<std::vector<double>, 6> sector_err;
  std::array<std::vector<double>, 6> sector_pred, sector_true;

  EvalReport rep;
  md_err.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const PairedExam& ex = test_set[i];
    Prediction p = predict(ex);
    groups[i] = assign_group(ex.vf.md);
    ++rep.group_counts[static_cast<std::size_t>(groups[i])];
    for (int j = 0; j < kVfLocations; ++j) {
      preds[i * kVfLocations + j] = p.vf[static_cast<std::size_t>(j)];
      targets[i * kVfLocations + j] = ex.vf.td[static_cast<std::size_t>(j)];
    }
    md_err.push_back(std::abs(ex.vf.md - p.md));
    md_err_group[static_cast<std::size_t>(groups[i])].push_back(
        std::abs(ex.vf.md - p.md));

    auto sp = sectoral_averages(std::span<const double>(p.vf.data(), kVfLocations),
                                sectors);
    auto st = sectoral_averages(std::span<const double>(ex.vf.td.data(), kVfLocations),
                                sectors);
    for (int s = 0; s < 6; ++s) {
      sector_err[static_cast<std::size_t>(s)].push_back(
          std::abs(st[static_cast<std::size_t>(s)] - sp[static_cast<std::size_t>(s)]));
      sector_pred[static_cast<std::size_t>(s)].push_back(sp[static_cast<std::size_t>(s)]);
      sector_true[static_cast<std::size_t>(s)].push_back(st[static_cast<std::size_t>(s)]);
    }
  }

  PointwiseMae pm = pointwise_mae(preds, targets, groups);
  rep.overall_mae = pm.overall;
  rep.group_mae = pm.per_group;
  rep.md_mae = stat_of(md_err);
  for (std::size_t g = 0; g < 3; ++g)
    if (!md_err_group[g].empty()) rep.group_md_mae_value[g] = stat_of(md_err_group[g]).mae;
  for (int s = 0; s < 6; ++s) {
    rep.sector_mae[static_cast<std::size_t>(s)] =
        stat_of(sector_err[static_cast<std::size_t>(s)]);
    rep.sector_r2[static_cast<std::size_t>(s)] =
        r2(sector_pred[static_cast<std::size_t>(s)], sector_true[static_cast<std::size_t>(s)]);
  }
  return rep;
}

namespace {

json stat_to_json(const MaeStat& s) {
  return {{"mae", s.mae}, {"se", s.se}, {"count", s.count}};
}

}  // namespace

std::string EvalReport::to_json_text() const {
  json groups;
  for (int g = 0; g < 3; ++g) {
    const char* name = kGroupNames[static_cast<std::size_t>(g)];
    if (group_mae[static_cast<std::size_t>(g)])
      groups[name] = stat_to_json(*group_mae[static_cast<std::size_t>(g)]);
    else
      groups[name] = nullptr;
  }
  json sectors, r2j;
  for (int s = 0; s < 6; ++s) {
    sectors[kSectorNames[static_cast<std::size_t>(s)]] =
        stat_to_json(sector_mae[static_cast<std::size_t>(s)]);
    if (sector_r2[static_cast<std::size_t>(s)])
      r2j[kSectorNames[static_cast<std::size_t>(s)]] = *sector_r2[static_cast<std::size_t>(s)];
    else
      r2j[kSectorNames[static_cast<std::size_t>(s)]] = nullptr;
  }
  json md_groups;
  for (int g = 0; g < 3; ++g) {
    const char* name = kGroupNames[static_cast<std::size_t>(g)];
    if (group_md_mae_value[static_cast<std::size_t>(g)])
      md_groups[name] = *group_md_mae_value[static_cast<std::size_t>(g)];
    else
      md_groups[name] = nullptr;
  }
  json root = {
      {"schema_version", 1},
      {"pointwise_mae", {{"overall", stat_to_json(overall_mae)}, {"groups", groups}}},
      {"sector_mae_total_deviation", sectors},
      {"md_mae", stat_to_json(md_mae)},
      {"md_mae_by_group", md_groups},
      {"sector_r2_total_deviation", r2j},
      {"group_counts",
       {{"early", group_counts[0]}, {"moderate", group_counts[1]},
        {"advanced", group_counts[2]}}},
  };
  return root.dump(2) + "\n";
}

std::string EvalReport::to_csv_text() const {
  std::ostringstream out;
  out << "metric,key,value,se,count\n";
  auto row = [&](const std::string& metric, const std::string& key, const MaeStat& s) {
    out << metric << ',' << key << ',' << s.mae << ',' << s.se << ',' << s.count << "\n";
  };
  row("pointwise_mae", "overall", overall_mae);
  for (int g = 0; g < 3; ++g)
    if (group_mae[static_cast<std::size_t>(g)])
      row("pointwise_mae", kGroupNames[static_cast<std::size_t>(g)],
          *group_mae[static_cast<std::size_t>(g)]);
  for (int s = 0; s < 6; ++s)
    row("sector_mae_td", kSectorNames[static_cast<std::size_t>(s)],
        sector_mae[static_cast<std::size_t>(s)]);
  row("md_mae", "overall", md_mae);
  for (int s = 0; s < 6; ++s)
    if (sector_r2[static_cast<std::size_t>(s)])
      out << "sector_r2_td," << kSectorNames[static_cast<std::size_t>(s)] << ','
          << *sector_r2[static_cast<std::size_t>(s)] << ",,\n";
  return out.str();
}

std::string md_histogram_csv(const std::vector<PairedExam>& exams, double bin_width) {
  if (bin_width <= 0) throw ConfigError("histogram bin width must be positive");
  double lo = -40.0, hi = 10.0;
  int bins = static_cast<int>(std::ceil((hi - lo) / bin_width));
  std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
  for (const PairedExam& ex : exams) {
    int b = static_cast<int>(std::floor((ex.vf.md - lo) / bin_width));
    b = std::clamp(b, 0, bins - 1);
    ++counts[static_cast<std::size_t>(b)];
  }
  std::ostringstream out;
  out << "bin_low,bin_high,count\n";
  for (int b = 0; b < bins; ++b)
    out << (lo + b * bin_width) << ',' << (lo + (b + 1) * bin_width) << ','
        << counts[static_cast<std::size_t>(b)] << "\n";
  return out.str();
}

}  // namespace retinn
