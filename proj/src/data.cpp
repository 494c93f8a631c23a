#include "retinn/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace retinn {

using nlohmann::json;

int PairedExam::date_gap_days() const {
  return std::abs(days_from_iso_date(sdoct_date) - days_from_iso_date(sap_date));
}

int assign_interval(double md) {
  if (!std::isfinite(md)) throw DataError("non-finite MD value");
  if (md > -6.0) return 1;
  if (md > -16.0) return 2;
  if (md >= -26.0) return 3;
  return 4;
}

Group assign_group(double md) {
  if (!std::isfinite(md)) throw DataError("non-finite MD value");
  if (md > -6.0) return Group::early;
  if (md > -12.0) return Group::moderate;
  return Group::advanced;
}

const char* group_name(Group g) {
  return kGroupNames[static_cast<std::size_t>(g)];
}

namespace {

[[noreturn]] void parse_fail(std::size_t line, const std::string& field,
                             const std::string& what) {
  throw DataError("line " + std::to_string(line) + ": field '" + field + "': " + what);
}

double finite_number(const json& obj, const char* field, std::size_t line) {
  if (!obj.contains(field)) parse_fail(line, field, "missing");
  const json& v = obj[field];
  if (!v.is_number()) parse_fail(line, field, "expected a number");
  double d = v.get<double>();
  if (!std::isfinite(d)) parse_fail(line, field, "non-finite value");
  return d;
}

}  // namespace

std::vector<PairedExam> parse_exams(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open exam file: " + path.string());
  std::vector<PairedExam> exams;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.empty()) continue;
    json obj;
    try {
      obj = json::parse(text);
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    if (!obj.contains("schema_version")) parse_fail(line_no, "schema_version", "missing");
    if (obj["schema_version"] != kExamSchemaVersion)
      parse_fail(line_no, "schema_version",
                 "unsupported version " + obj["schema_version"].dump());

    PairedExam ex;
    if (!obj.contains("patient_id") || !obj["patient_id"].is_string())
      parse_fail(line_no, "patient_id", "missing or not a string");
    ex.patient_id = obj["patient_id"].get<std::string>();
    if (ex.patient_id.empty()) parse_fail(line_no, "patient_id", "empty");

    if (!obj.contains("eye") || !obj["eye"].is_string())
      parse_fail(line_no, "eye", "missing or not a string");
    std::string eye = obj["eye"].get<std::string>();
    if (eye == "left") ex.eye = Eye::left;
    else if (eye == "right") ex.eye = Eye::right;
    else parse_fail(line_no, "eye", "expected 'left' or 'right', got '" + eye + "'");

    ex.age = finite_number(obj, "age", line_no);
    if (ex.age < 0) parse_fail(line_no, "age", "negative age");

    for (const char* field : {"sdoct_date", "sap_date"}) {
      if (!obj.contains(field) || !obj[field].is_string())
        parse_fail(line_no, field, "missing or not a string");
      std::string date = obj[field].get<std::string>();
      try {
        days_from_iso_date(date);
      } catch (const DataError& e) {
        parse_fail(line_no, field, e.what());
      }
      (std::string(field) == "sdoct_date" ? ex.sdoct_date : ex.sap_date) = date;
    }

    ex.rnfl.quality_score = finite_number(obj, "quality_score", line_no);
    ex.fixation_loss_pct = finite_number(obj, "fixation_loss_pct", line_no);
    ex.false_positive_pct = finite_number(obj, "false_positive_pct", line_no);

    if (!obj.contains("rnfl") || !obj["rnfl"].is_array())
      parse_fail(line_no, "rnfl", "missing or not an array");
    const json& rnfl = obj["rnfl"];
    if (rnfl.size() != kRnflPoints)
      parse_fail(line_no, "rnfl",
                 "expected " + std::to_string(kRnflPoints) + " values, got " +
                     std::to_string(rnfl.size()));
    ex.rnfl.values.reserve(kRnflPoints);
    for (const json& v : rnfl) {
      if (!v.is_number()) parse_fail(line_no, "rnfl", "non-numeric entry");
      double d = v.get<double>();
      if (!std::isfinite(d)) parse_fail(line_no, "rnfl", "non-finite value");
      if (d < 0) parse_fail(line_no, "rnfl", "negative thickness");
      ex.rnfl.values.push_back(d);
    }

    if (!obj.contains("td") || !obj["td"].is_array())
      parse_fail(line_no, "td", "missing or not an array");
    const json& td = obj["td"];
    if (td.size() != kVfLocations)
      parse_fail(line_no, "td",
                 "expected " + std::to_string(kVfLocations) +
                     " values (blind-spot locations pre-excluded), got " +
                     std::to_string(td.size()));
    for (std::size_t j = 0; j < td.size(); ++j) {
      if (!td[j].is_number()) parse_fail(line_no, "td", "non-numeric entry");
      double d = td[j].get<double>();
      if (!std::isfinite(d)) parse_fail(line_no, "td", "non-finite value");
      if (d < -40.0 || d > 10.0)
        parse_fail(line_no, "td",
                   "value " + std::to_string(d) + " outside [-40, 10] dB");
      ex.vf.td[j] = d;
    }

    ex.vf.md = finite_number(obj, "md", line_no);
    ex.vf.psd = finite_number(obj, "psd", line_no);
    exams.push_back(std::move(ex));
  }
  return exams;
}

void write_exams(const std::filesystem::path& path,
                 const std::vector<PairedExam>& exams) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write exam file: " + path.string());
  for (const PairedExam& ex : exams) {
    json obj = {{"schema_version", kExamSchemaVersion},
                {"patient_id", ex.patient_id},
                {"eye", ex.eye == Eye::left ? "left" : "right"},
                {"age", ex.age},
                {"sdoct_date", ex.sdoct_date},
                {"sap_date", ex.sap_date},
                {"quality_score", ex.rnfl.quality_score},
                {"fixation_loss_pct", ex.fixation_loss_pct},
                {"false_positive_pct", ex.false_positive_pct},
                {"rnfl", ex.rnfl.values},
                {"td", ex.vf.td},
                {"md", ex.vf.md},
                {"psd", ex.vf.psd}};
    out << obj.dump() << "\n";
  }
}

FilterResult reliability_filter(const std::vector<PairedExam>& exams) {
  FilterResult res;
  for (std::size_t i = 0; i < exams.size(); ++i) {
    const PairedExam& ex = exams[i];
    std::string reason;
    if (ex.fixation_loss_pct > 33.0) reason = "fixation_loss";
    else if (ex.false_positive_pct > 15.0) reason = "false_positive";
    else if (ex.rnfl.quality_score < 15.0) reason = "quality";
    else if (ex.date_gap_days() > 180) reason = "pairing_window";
    if (reason.empty()) res.kept.push_back(ex);
    else res.rejected.push_back({i, ex.patient_id, reason});
  }
  return res;
}

Splits split_by_patient(const std::vector<PairedExam>& exams,
                        const std::array<double, 3>& fractions, std::uint64_t seed) {
  double fsum = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(fsum - 1.0) > 1e-9)
    throw ConfigError("split fractions must sum to 1");
  for (double f : fractions)
    if (f < 0) throw ConfigError("split fractions must be non-negative");

  // patients in order of first appearance, then shuffled
  std::vector<std::string> patients;
  std::map<std::string, std::vector<std::size_t>> by_patient;
  for (std::size_t i = 0; i < exams.size(); ++i) {
    auto [it, inserted] = by_patient.try_emplace(exams[i].patient_id);
    if (inserted) patients.push_back(exams[i].patient_id);
    it->second.push_back(i);
  }
  if (patients.size() < 3)
    throw ConfigError("patient-grouped split needs at least 3 patients, got " +
                      std::to_string(patients.size()));
  Rng rng(seed);
  rng.shuffle(patients);

  double total = static_cast<double>(exams.size());
  std::array<double, 3> assigned{};
  std::array<std::vector<std::size_t>, 3> members;
  Splits out;
  for (const std::string& pid : patients) {
    const auto& idxs = by_patient[pid];
    // split with the largest remaining exam deficit takes the whole patient
    int best = 0;
    double best_deficit = -1e300;
    for (int k = 0; k < 3; ++k) {
      double deficit = fractions[static_cast<std::size_t>(k)] * total -
                       assigned[static_cast<std::size_t>(k)];
      if (deficit > best_deficit + 1e-12) {
        best_deficit = deficit;
        best = k;
      }
    }
    assigned[static_cast<std::size_t>(best)] += static_cast<double>(idxs.size());
    ++out.stats.patient_counts[static_cast<std::size_t>(best)];
    for (std::size_t i : idxs) members[static_cast<std::size_t>(best)].push_back(i);
  }
  for (int k = 0; k < 3; ++k) std::sort(members[static_cast<std::size_t>(k)].begin(),
                                        members[static_cast<std::size_t>(k)].end());

  auto emit = [&](int k, std::vector<PairedExam>& dst) {
    for (std::size_t i : members[static_cast<std::size_t>(k)]) {
      dst.push_back(exams[i]);
      double md = exams[i].vf.md;
      ++out.stats.interval_counts[static_cast<std::size_t>(k)]
                                 [static_cast<std::size_t>(assign_interval(md) - 1)];
      ++out.stats.group_counts[static_cast<std::size_t>(k)]
                              [static_cast<std::size_t>(assign_group(md))];
    }
    out.stats.exam_counts[static_cast<std::size_t>(k)] =
        members[static_cast<std::size_t>(k)].size();
  };
  emit(0, out.train);
  emit(1, out.val);
  emit(2, out.test);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

namespace {

constexpr double kMaxFieldLoss = 38.0;   // dB at full structural loss
constexpr double kTransferSlope = 1.2;   // saturating linear transfer
constexpr int kWindowSamples = 8;

double angular_delta(double a, double b) {
  double d = std::fmod(std::abs(a - b), 360.0);
  return d > 180.0 ? 360.0 - d : d;
}

// unclamped raised-cosine wedge sum
double wedge_sum(std::span<const SynthWedge> wedges, double theta) {
  double depth = 0.0;
  for (const SynthWedge& w : wedges) {
    double d = angular_delta(theta, w.center_deg);
    double half = w.width_deg / 2.0;
    if (d < half)
      depth += w.depth * 0.5 * (1.0 + std::cos(3.14159265358979323846 * d / half));
  }
  return depth;
}

double loss_from_mean_depth(double mean_depth) {
  return kMaxFieldLoss * std::min(1.0, kTransferSlope * mean_depth);
}

std::uint64_t child_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t n) {
  std::uint64_t bytes[3] = {seed, tag, n};
  return fnv1a64(bytes, sizeof(bytes));
}

}  // namespace

double synth_defect_depth(std::span<const SynthWedge> wedges, double theta_deg) {
  return std::min(1.0, wedge_sum(wedges, theta_deg));
}

double synth_field_loss(const LocationTable& table, int location_index,
                        std::span<const SynthWedge> wedges) {
  auto [lo, hi] = synth_truth_angle_window(table, location_index);
  double mean_depth = 0.0;
  for (int s = 0; s < kWindowSamples; ++s) {
    double theta = lo + (hi - lo) * (s + 0.5) / kWindowSamples;
    mean_depth += synth_defect_depth(wedges, theta);
  }
  return loss_from_mean_depth(mean_depth / kWindowSamples);
}

std::pair<double, double> synth_truth_angle_window(const LocationTable& table,
                                                   int location_index) {
  const VfLocation& loc = table.at(location_index);
  // rank within the hemifield, canonical order
  std::vector<int> idx = table.hemifield_indices(loc.hemifield);
  int rank = -1;
  for (std::size_t r = 0; r < idx.size(); ++r)
    if (idx[r] == location_index) rank = static_cast<int>(r);
  if (rank < 0) throw ConfigError("location not in its hemifield listing");
  double span = 180.0 / static_cast<double>(kHemifieldLocations);
  // superior field locations are served by the inferior hemiretina half
  double base = loc.hemifield == Hemifield::superior ? 180.0 : 0.0;
  return {base + rank * span, base + (rank + 1) * span};
}

std::vector<PairedExam> synth_generate(const SynthConfig& cfg,
                                       const LocationTable& table) {
  if (cfg.n < 0) throw ConfigError("synth n must be non-negative");
  double mix_sum = 0.0;
  for (double m : cfg.defect_mix) {
    if (m < 0) throw ConfigError("defect mix proportions must be non-negative");
    mix_sum += m;
  }
  if (std::abs(mix_sum - 1.0) > 1e-9)
    throw ConfigError("defect mix proportions must sum to 1");

  Rng layout(child_seed(cfg.seed, 0xa11c, 0));
  std::vector<PairedExam> exams;
  exams.reserve(static_cast<std::size_t>(cfg.n));

  int patient_no = 0;
  int exams_for_patient = 0;
  double patient_scale = 1.0;
  double patient_age = 55.0;

  for (int i = 0; i < cfg.n; ++i) {
    if (exams_for_patient == 0) {
      ++patient_no;
      Rng prng(child_seed(cfg.seed, 0x9a71e57, static_cast<std::uint64_t>(patient_no)));
      patient_scale = prng.uniform(0.88, 1.12);
      patient_age = prng.uniform(25.0, 85.0);
      exams_for_patient = static_cast<int>(layout.uniform_int(1, 3));
    }
    --exams_for_patient;

    Rng rng(child_seed(cfg.seed, 0xe7a3, static_cast<std::uint64_t>(i)));
    PairedExam ex;
    ex.patient_id = "SYN" + std::to_string(patient_no);
    ex.eye = rng.uniform() < 0.5 ? Eye::left : Eye::right;
    ex.age = patient_age + rng.uniform(0.0, 3.0);

    // severity interval by the requested mix
    double u = rng.uniform();
    int interval = 4;
    double acc = 0.0;
    for (int k = 0; k < 4; ++k) {
      acc += cfg.defect_mix[static_cast<std::size_t>(k)];
      if (u < acc) {
        interval = k + 1;
        break;
      }
    }
    // target MD drawn inside the interval with a margin against noise leakage
    double target_md = 0.0;
    switch (interval) {
      case 1: target_md = rng.uniform(-5.4, 0.3); break;
      case 2: target_md = rng.uniform(-15.4, -6.6); break;
      case 3: target_md = rng.uniform(-25.4, -16.6); break;
      default: target_md = rng.uniform(-34.0, -26.6); break;
    }

    // deeper intervals need enough combined wedge coverage for the target to
    // stay reachable through the saturating transfer
    int wedge_lo = 1, wedge_hi = 2;
    double width_lo = 20.0, width_hi = 60.0;
    switch (interval) {
      case 2: wedge_lo = 2; wedge_hi = 3; width_lo = 40.0; width_hi = 90.0; break;
      case 3: wedge_lo = 3; wedge_hi = 5; width_lo = 60.0; width_hi = 110.0; break;
      case 4: wedge_lo = 5; wedge_hi = 7; width_lo = 80.0; width_hi = 130.0; break;
      default: break;
    }
    int wedge_count = static_cast<int>(rng.uniform_int(wedge_lo, wedge_hi));
    std::vector<SynthWedge> wedges;
    for (int w = 0; w < wedge_count; ++w)
      wedges.push_back({rng.uniform(0.0, 360.0), rng.uniform(width_lo, width_hi),
                        rng.uniform(0.45, 1.0)});

    double healthy_td = rng.normal() * 0.5 + 0.3;

    // cache the unclamped wedge profile at every window sample, then scale
    // the wedge depths so the noise-free field mean hits the target MD
    std::array<std::array<double, kWindowSamples>, kVfLocations> profile{};
    for (int j = 0; j < kVfLocations; ++j) {
      auto [wlo, whi] = synth_truth_angle_window(table, j);
      for (int s = 0; s < kWindowSamples; ++s) {
        double theta = wlo + (whi - wlo) * (s + 0.5) / kWindowSamples;
        profile[static_cast<std::size_t>(j)][static_cast<std::size_t>(s)] =
            wedge_sum(wedges, theta);
      }
    }
    auto loss_at = [&](int j, double scale) {
      double mean_depth = 0.0;
      for (int s = 0; s < kWindowSamples; ++s)
        mean_depth += std::min(
            1.0, scale * profile[static_cast<std::size_t>(j)][static_cast<std::size_t>(s)]);
      return loss_from_mean_depth(mean_depth / kWindowSamples);
    };
    auto md_at = [&](double scale) {
      double s = 0.0;
      for (int j = 0; j < kVfLocations; ++j) s += healthy_td - loss_at(j, scale);
      return s / kVfLocations;
    };
    double scale = 0.0;
    if (target_md < md_at(0.0)) {
      double lo = 0.0, hi = 16.0;
      if (md_at(hi) > target_md) {
        scale = hi;  // saturated; as deep as this wedge set goes
      } else {
        for (int it = 0; it < 60; ++it) {
          double mid = 0.5 * (lo + hi);
          if (md_at(mid) > target_md) lo = mid;
          else hi = mid;
        }
        scale = 0.5 * (lo + hi);
      }
    }

    // visual field with heteroscedastic noise
    double td_sum = 0.0;
    for (int j = 0; j < kVfLocations; ++j) {
      double loss = loss_at(j, scale);
      double sigma = 0.5 + 2.0 * (loss / kMaxFieldLoss);
      double td = healthy_td - loss + rng.normal() * sigma;
      td = std::clamp(td, -40.0, 10.0);
      ex.vf.td[static_cast<std::size_t>(j)] = td;
      td_sum += td;
    }
    ex.vf.md = td_sum / kVfLocations;
    double var = 0.0;
    for (double td : ex.vf.td) var += (td - ex.vf.md) * (td - ex.vf.md);
    ex.vf.psd = std::sqrt(var / (kVfLocations - 1));

    // RNFL: double-hump TSNIT baseline thinned by the same wedges
    ex.rnfl.values.resize(kRnflPoints);
    for (int p = 0; p < kRnflPoints; ++p) {
      double theta = 360.0 * p / kRnflPoints;
      double sup = (theta - 95.0) / 38.0;
      double inf = (theta - 275.0) / 38.0;
      double base = 46.0 + 40.0 * (std::exp(-sup * sup) + std::exp(-inf * inf));
      double depth = std::min(1.0, scale * wedge_sum(wedges, theta));
      double v = patient_scale * base * (1.0 - 0.82 * depth) + rng.normal() * 1.5;
      ex.rnfl.values[static_cast<std::size_t>(p)] = std::max(0.0, v);
    }

    ex.rnfl.quality_score = rng.uniform(16.0, 40.0);
    ex.fixation_loss_pct = rng.uniform(0.0, 30.0);
    ex.false_positive_pct = rng.uniform(0.0, 14.0);
    int sdoct_day = 16801 + static_cast<int>(rng.uniform_int(0, 3650));
    int gap = static_cast<int>(rng.uniform_int(-170, 170));
    ex.sdoct_date = iso_date_from_days(sdoct_day);
    ex.sap_date = iso_date_from_days(sdoct_day + gap);
    exams.push_back(std::move(ex));
  }
  return exams;
}

}  // namespace retinn
