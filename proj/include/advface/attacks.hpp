#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "advface/featnet.hpp"
#include "advface/smoothness.hpp"

namespace advface {

enum class Algorithm { PGD, IFGSM, CW, LOTS };
enum class Layout { PatchOnly, PatchNoiseCombo, NoiseOnly };
enum class BlackBox { None, DI, Ensemble, DIEnsemble };

const char* to_string(Algorithm a);
const char* to_string(Layout l);
const char* to_string(BlackBox b);
Algorithm algorithm_from_string(const std::string& s);
Layout layout_from_string(const std::string& s);
BlackBox blackbox_from_string(const std::string& s);

inline bool uses_diversity(BlackBox b) {
  return b == BlackBox::DI || b == BlackBox::DIEnsemble;
}
inline bool uses_ensemble(BlackBox b) {
  return b == BlackBox::Ensemble || b == BlackBox::DIEnsemble;
}

struct AttackConfig {
  Algorithm algorithm = Algorithm::PGD;
  int iterations = 2000;
  double step_size = 0.01;     // sign-step methods (PGD, IFGSM, LOTS)
  double cw_step_size = 0.5;   // plain gradient step in tanh space
  double epsilon_patch = 1.0;
  double epsilon_small = 0.1;
  Layout layout = Layout::PatchOnly;
  SmoothnessKind smoothness = SmoothnessKind::None;
  double gamma = 0.01;
  // Uniform activation threshold used when `thresholds` is not supplied.
  double tau = 0.02;
  std::optional<ThresholdMatrix> thresholds;
  BlackBox blackbox = BlackBox::None;
  double crop_fraction = 0.07;
  double init_sigma = 0.05;  // PGD start noise
  Metric metric = Metric::L2;
  std::uint64_t seed = 0;

  static int default_iterations(Algorithm a) { return a == Algorithm::CW ? 7000 : 2000; }
  void validate() const;
};

// Where the optimizer may write. `patch` is M_p, `noise` is M_s; they are
// disjoint and either may be empty depending on the layout.
struct AttackMasks {
  BinaryMask patch;
  BinaryMask noise;

  BinaryMask trainable() const { return patch.united(noise); }
  // Region over which the smoothness penalty is evaluated.
  const BinaryMask& smoothness_region() const;
};

// M_s is the complement of M_p over the whole aligned crop for the combo
// layout; NoiseOnly trains every pixel as a single small-noise layer.
AttackMasks make_masks(Layout layout, const BinaryMask& patch_mask);

struct AttackResult {
  ImageTensor adversarial;
  std::vector<double> loss_trace;
  std::vector<double> distance_trace;
  int iterations_run = 0;
  int best_iteration = 0;
  double best_loss = 0.0;
  // Number of [0,1] clamp operations that changed a value (always 0 for CW).
  std::size_t box_clips = 0;
};

// Observer invoked with the iterate index and image: index 0 is the
// initialization, index t >= 1 the image after the t-th update.
using IterateObserver = std::function<void(int, const ImageTensor&)>;

struct LossEval {
  double loss = 0.0;
  double distance = 0.0;  // ensemble feature term alone
  ImageTensor grad;       // zero outside trainable pixels
};

// Full objective: gamma * L_smooth(x_train) + sum_i w_i f_d(f_i(x_t), f_i(x'_train))
// where x'_train is the input-diversity transform of x_train when enabled.
// LOTS replaces f_d with 1/2 ||f_i(x'_train) - f_i(x_t)||^2. Target embeddings
// are computed once at construction.
class AdversarialObjective {
 public:
  AdversarialObjective(const ImageTensor& x_s, const ImageTensor& x_t,
                       const AttackConfig& cfg, EnsembleSpec models, AttackMasks masks,
                       QueryAudit* audit = nullptr);

  // Fixes the smoothness reference (the initialized image) for the masked loss.
  void set_reference(const ImageTensor& x0);
  const SmoothnessSpec& smoothness() const { return smooth_; }
  const AttackMasks& masks() const { return masks_; }
  const BinaryMask& trainable() const { return trainable_; }

  // `crop` is the input-diversity transform for this evaluation (nullptr for none).
  LossEval evaluate(const ImageTensor& x_train, const CropResize* crop,
                    bool want_grad = true) const;

 private:
  ImageTensor x_s_;
  AttackConfig cfg_;
  EnsembleSpec models_;
  AttackMasks masks_;
  BinaryMask trainable_;
  SmoothnessSpec smooth_;
  std::vector<Embedding> targets_;
  QueryAudit* audit_;
};

// One-shot objective evaluation. The smoothness reference is x_train itself
// unless `reference` is given.
LossEval adversarial_loss(const ImageTensor& x_s, const ImageTensor& x_train,
                          const ImageTensor& x_t, const AttackConfig& cfg,
                          const EnsembleSpec& models, const AttackMasks& masks,
                          const ImageTensor* reference = nullptr,
                          const CropResize* crop = nullptr);

struct AttackContext {
  QueryAudit* audit = nullptr;
  IterateObserver observer;
};

AttackResult run_pgd(const ImageTensor& x_s, const ImageTensor& x_t, const AttackMasks& masks,
                     const AttackConfig& cfg, const EnsembleSpec& models,
                     const AttackContext& ctx = {});
AttackResult run_ifgsm(const ImageTensor& x_s, const ImageTensor& x_t,
                       const AttackMasks& masks, const AttackConfig& cfg,
                       const EnsembleSpec& models, const AttackContext& ctx = {});
AttackResult run_cw(const ImageTensor& x_s, const ImageTensor& x_t, const AttackMasks& masks,
                    const AttackConfig& cfg, const EnsembleSpec& models,
                    const AttackContext& ctx = {});
AttackResult run_lots(const ImageTensor& x_s, const ImageTensor& x_t,
                      const AttackMasks& masks, const AttackConfig& cfg,
                      const EnsembleSpec& models, const AttackContext& ctx = {});

// Dispatches on cfg.algorithm.
AttackResult run_attack(const ImageTensor& x_s, const ImageTensor& x_t,
                        const AttackMasks& masks, const AttackConfig& cfg,
                        const EnsembleSpec& models, const AttackContext& ctx = {});

// Tanh box parametrization: pixel = (tanh(w) + 1) / 2.
inline double cw_to_pixel(double w) { return (std::tanh(w) + 1.0) / 2.0; }
inline double cw_from_pixel(double x) { return std::atanh(2.0 * x - 1.0); }

// ---- ablation grid -------------------------------------------------------

enum class Technique { NoReg, TV, Ours, ComboTV, ComboOurs };

const char* to_string(Technique t);
Technique technique_from_string(const std::string& s);
// S0..S4 row label used in transferability tables.
const char* technique_label(Technique t);
Layout technique_layout(Technique t);
SmoothnessKind technique_smoothness(Technique t);
bool is_baseline(Technique t);

struct CellKey {
  Algorithm algorithm = Algorithm::PGD;
  BlackBox blackbox = BlackBox::None;
  Technique technique = Technique::NoReg;

  std::string str() const;  // e.g. "PGD/DI/ComboOurs"
  static CellKey parse(const std::string& s);
  auto operator<=>(const CellKey&) const = default;
};

std::vector<CellKey> full_grid();

struct FacePair {
  std::string source_id;
  std::string target_id;
  ImageTensor source;
  ImageTensor target;
};

// Model roles for the black-box protocol: `primary` alone attacks in
// non-ensemble cells, `ensemble` (equal weights) in ensemble cells, and
// `held_out` models are reserved for black-box evaluation.
struct ModelRoles {
  ExtractorPtr primary;
  std::vector<ExtractorPtr> ensemble;
  std::vector<ExtractorPtr> held_out;

  EnsembleSpec generation_models(BlackBox b) const;
  void validate() const;
};

struct GridSettings {
  AttackConfig base;            // algorithm/layout/smoothness/blackbox overridden per cell
  int iterations = 2000;        // PGD, IFGSM, LOTS
  int cw_iterations = 7000;
  std::uint64_t master_seed = 0;
  int workers = 1;
};

struct CellRun {
  CellKey key;
  int pair_index = 0;
  AttackConfig config;
  std::uint64_t seed = 0;
  std::vector<std::string> generation_models;
  std::vector<std::string> queried_models;
  AttackResult result;
  std::string error;  // non-empty when the run failed
};

AttackConfig cell_config(const GridSettings& settings, const CellKey& key, int pair_index);

CellRun run_cell(const GridSettings& settings, const CellKey& key, int pair_index,
                 const FacePair& pair, const BinaryMask& patch_mask,
                 const ModelRoles& roles, const IterateObserver& observer = {});

// Runs every (cell, pair) combination; results are ordered by (cell, pair)
// regardless of the worker count. Failures are captured per run.
std::vector<CellRun> run_grid(const std::vector<FacePair>& pairs,
                              const std::vector<CellKey>& cells,
                              const BinaryMask& patch_mask, const ModelRoles& roles,
                              const GridSettings& settings);

}  // namespace advface
