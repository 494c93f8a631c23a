#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "retinn/common.hpp"
#include "retinn/locations.hpp"

namespace retinn {

inline constexpr int kRnflPoints = 768;
inline constexpr int kExamSchemaVersion = 1;

// 768 RNFL thickness values (micrometers) in TSNIT circular order. Indices
// 0..383 are the superior hemiretina half (temporal -> superior -> nasal),
// 384..767 the inferior half.
struct RnflVector {
  std::vector<double> values;  // 768, all finite and >= 0
  double quality_score = 0.0;
};

// 52 age-corrected total-deviation values (dB) plus summary indices.
struct VisualField {
  std::array<double, kVfLocations> td{};
  double md = 0.0;
  double psd = 0.0;
};

enum class Eye { left, right };
enum class Group { early, moderate, advanced };

inline constexpr std::array<const char*, 3> kGroupNames = {"early", "moderate",
                                                           "advanced"};

struct PairedExam {
  std::string patient_id;
  Eye eye = Eye::right;
  double age = 0.0;
  std::string sdoct_date;  // ISO-8601
  std::string sap_date;
  RnflVector rnfl;
  VisualField vf;
  double fixation_loss_pct = 0.0;
  double false_positive_pct = 0.0;

  int date_gap_days() const;
};

// Severity interval of the training-loss reweighting: 1: md > -6,
// 2: -6 >= md > -16, 3: -16 >= md >= -26, 4: md < -26.
int assign_interval(double md);

// Disease group of the evaluation tables: early: md > -6,
// moderate: -12 < md <= -6, advanced: md <= -12.
Group assign_group(double md);
const char* group_name(Group g);

// JSON-lines exam file, one object per line. Throws DataError naming the line
// and field on any violation of the type invariants.
std::vector<PairedExam> parse_exams(const std::filesystem::path& path);
void write_exams(const std::filesystem::path& path,
                 const std::vector<PairedExam>& exams);

struct Rejection {
  std::size_t input_index;
  std::string patient_id;
  std::string reason;  // fixation_loss | false_positive | quality | pairing_window
};

struct FilterResult {
  std::vector<PairedExam> kept;
  std::vector<Rejection> rejected;
};

// Drops exams with fixation loss > 33%, false positives > 15%, quality score
// < 15, or an SDOCT/SAP date gap over 180 days. Boundaries follow the strict
// wording: exactly 33 / 15 / 15 / 180 are kept.
FilterResult reliability_filter(const std::vector<PairedExam>& exams);

struct SplitStats {
  std::array<std::size_t, 3> exam_counts{};            // train/val/test
  std::array<std::size_t, 3> patient_counts{};
  std::array<std::array<int, 4>, 3> interval_counts{};  // per split
  std::array<std::array<int, 3>, 3> group_counts{};     // per split
};

struct Splits {
  std::vector<PairedExam> train, val, test;
  SplitStats stats;
};

// Patient-grouped split: patients shuffled by the seeded generator, then each
// assigned to the split with the largest remaining exam deficit, so exam
// fractions approach the targets without ever dividing a patient.
Splits split_by_patient(const std::vector<PairedExam>& exams,
                        const std::array<double, 3>& fractions, std::uint64_t seed);

struct SynthConfig {
  int n = 1000;
  std::uint64_t seed = 1;
  // target proportions of the four severity intervals; must sum to 1
  std::array<double, 4> defect_mix = {0.70, 0.15, 0.10, 0.05};
};

// Synthetic structure-function exams: a double-hump TSNIT baseline per eye,
// 0-3 arcuate wedge defects scaled to a target MD, a fixed sector-to-sector
// correspondence between disc angles and field locations (saturating linear
// transfer), and heteroscedastic field noise that grows with defect depth.
// The emitted md is exactly the mean of the 52 td values.
std::vector<PairedExam> synth_generate(const SynthConfig& cfg,
                                       const LocationTable& table);

// Generator-truth correspondence: the disc-angle window (degrees, TSNIT
// origin at the temporal quadrant) feeding a field location. Field locations
// of the superior hemifield read the inferior hemiretina half (180..360) and
// vice versa. Exposed so tests can predict which locations a wedge touches.
std::pair<double, double> synth_truth_angle_window(const LocationTable& table,
                                                   int location_index);

struct SynthWedge {
  double center_deg = 0.0;
  double width_deg = 40.0;
  double depth = 1.0;  // 0..1 structural loss fraction at the wedge center
};

// Combined raised-cosine wedge depth at one disc angle, clamped to 1.
double synth_defect_depth(std::span<const SynthWedge> wedges, double theta_deg);

// Field sensitivity loss (dB, >= 0) induced at one location: saturating
// linear transfer of the mean wedge depth over the location's angle window.
double synth_field_loss(const LocationTable& table, int location_index,
                        std::span<const SynthWedge> wedges);

}  // namespace retinn
