#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advface/attacks.hpp"
#include "advface/featnet.hpp"
#include "advface/physim.hpp"

namespace advface {

// Verification cutoff. L2 scores are distances (accept when <= value);
// cosine scores are similarities (accept when >= value).
struct VerificationThreshold {
  Metric metric = Metric::L2;
  double value = 0.0;
  std::string model;
  double f1 = 0.0;

  bool accepts(double score) const {
    return metric == Metric::L2 ? score <= value : score >= value;
  }
};

double verification_score(const Embedding& probe, const Embedding& reference, Metric metric);

// Best-f1 threshold with genuine matches as the positive class. Candidates
// are midpoints between consecutive unique scores plus the accept-all cut at
// the loosest score; ties resolve to the centre of the maximal-f1 interval.
VerificationThreshold calibrate_threshold(std::span<const double> genuine,
                                          std::span<const double> impostor, Metric metric,
                                          std::string model = {});

double f1_at(std::span<const double> genuine, std::span<const double> impostor,
             const VerificationThreshold& t);

struct ImagePair {
  ImageTensor a;
  ImageTensor b;
};

struct CalibrationSet {
  std::vector<ImagePair> genuine;
  std::vector<ImagePair> impostor;
};

// Synthetic identities: genuine = two captures of one identity, impostor =
// captures of two different identities.
CalibrationSet make_calibration_set(int n_identities, std::uint64_t seed, int size = 112);

VerificationThreshold calibrate_model(const FeatureExtractor& model, const CalibrationSet& set,
                                      Metric metric);

using ThresholdMap = std::map<std::string, VerificationThreshold>;

const VerificationThreshold& threshold_for(const ThresholdMap& thresholds,
                                           const std::string& model);

bool digital_match(const FeatureExtractor& model, const ImageTensor& probe,
                   const ImageTensor& target, const ThresholdMap& thresholds,
                   double* score = nullptr);

// Fraction of (adversarial, model) combinations whose match against the
// paired target passes that model's threshold.
double digital_asr(const std::vector<ImageTensor>& adversarial,
                   const std::vector<ImageTensor>& targets,
                   const std::vector<ExtractorPtr>& models, const ThresholdMap& thresholds);

// ---- per-run evaluation ---------------------------------------------------

struct ModelOutcome {
  std::string model;
  bool digital_success = false;
  double digital_score = 0.0;
  std::optional<double> physical_asr;  // set only when physically evaluated
  std::size_t retained_captures = 0;
};

struct RunEvaluation {
  CellKey key;
  int pair_index = 0;
  std::string error;         // attack failure; no outcomes then
  double patch_tv = 0.0;     // TV of the final patch deviation
  double noise_linf = 0.0;   // largest deviation on the small-noise layer
  std::vector<ModelOutcome> whitebox;
  std::vector<ModelOutcome> blackbox;
};

struct EvalSettings {
  int physical_pairs = 5;  // leading pairs of each cell that get capture simulation
  PhysicalOptions physical;
};

// Digital evaluation on generation models (white-box) and held-out models
// (black-box), then capture simulation of the digitally successful AXs.
RunEvaluation evaluate_run(const CellRun& run, const FacePair& pair,
                           const BinaryMask& patch_mask, const ModelRoles& roles,
                           const ThresholdMap& thresholds, const CaptureGrid& grid,
                           const EvalSettings& settings);

// Runs whose attack generation touched a held-out model (should be empty).
std::vector<std::string> blackbox_hygiene_violations(const std::vector<CellRun>& runs,
                                                     const ModelRoles& roles);

// ---- reports ----------------------------------------------------------------

enum class EvalMode { WhiteBox, BlackBox };

struct CellReport {
  CellKey key;
  int runs = 0;
  int failed = 0;
  std::optional<double> digital_whitebox;
  std::optional<double> digital_blackbox;
  std::optional<double> physical_whitebox;
  std::optional<double> physical_blackbox;
  std::optional<double> transfer_whitebox;
  std::optional<double> transfer_blackbox;
  std::optional<double> mean_tv;
};

struct AblationReport {
  std::vector<CellReport> cells;
  std::map<Technique, std::optional<double>> technique_tv;
  // [technique][algorithm] physical transferability of digital successes
  // (white-box, pooled over black-box techniques).
  std::map<Technique, std::map<Algorithm, std::optional<double>>> transferability;
};

std::optional<double> digital_asr(std::span<const RunEvaluation> evals, EvalMode mode);
std::optional<double> physical_asr(std::span<const RunEvaluation> evals, EvalMode mode);
std::optional<double> physical_transferability(std::span<const RunEvaluation> evals,
                                               EvalMode mode);
std::map<Technique, std::optional<double>> tv_statistics(std::span<const RunEvaluation> evals);

// Cells listed in `cells` appear exactly once, in that order; cells without
// any evaluation get null rates.
AblationReport build_report(const std::vector<RunEvaluation>& evals,
                            const std::vector<CellKey>& cells);

std::string report_csv(const AblationReport& report);
std::string report_json(const AblationReport& report);
std::string transferability_csv(const AblationReport& report);
// Two-column plot data: cell key, white-box/black-box ASR per domain.
std::string asr_bars_csv(const AblationReport& report, bool physical, EvalMode mode);

std::string to_json(const RunEvaluation& eval);
RunEvaluation run_evaluation_from_json(const std::string& text);

// ---- epsilon sweep ---------------------------------------------------------

struct SweepSettings {
  std::vector<double> epsilons{0.02, 0.05, 0.1, 0.25, 0.5, 0.75, 1.0};
  int successes_per_epsilon = 3;
  AttackConfig base;  // layout forced to NoiseOnly, epsilon_small set per point
  std::uint64_t master_seed = 0;
  int workers = 1;
  PhysicalOptions physical;
};

struct SweepPoint {
  double epsilon = 0.0;
  int attempted = 0;
  int digital_successes = 0;
  std::vector<double> physical_asr;  // one per evaluated AX
  std::optional<double> mean_physical_asr;
  std::optional<double> standard_error;
  double linf = 0.0;        // largest measured deviation over evaluated AXs
  double linf_bound = 0.0;  // min(epsilon, largest deviation the [0,1] box allows)
};

// For each epsilon, attacks the pairs in order with the full-face noise
// layout, keeps the first `successes_per_epsilon` digital successes and
// simulates their capture. epsilon = 0 evaluates the clean sources.
std::vector<SweepPoint> epsilon_sweep(const SweepSettings& settings,
                                      const std::vector<FacePair>& pairs,
                                      const ExtractorPtr& model,
                                      const VerificationThreshold& threshold,
                                      const CaptureGrid& grid);

std::string sweep_csv(const std::vector<SweepPoint>& points);

}  // namespace advface
