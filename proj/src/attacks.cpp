#include "advface/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "advface/parallel.hpp"

namespace advface {

namespace {

// Keeps the inverse tanh finite for source pixels sitting exactly on 0 or 1.
constexpr double kCwMargin = 1e-6;

template <typename E>
E parse_enum(const std::string& s, std::initializer_list<std::pair<const char*, E>> table,
             const char* what) {
  for (const auto& [name, value] : table) {
    if (s == name) return value;
  }
  throw ContractViolation(std::string("unknown ") + what + " '" + s + "'");
}

}  // namespace

const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::PGD: return "PGD";
    case Algorithm::IFGSM: return "IFGSM";
    case Algorithm::CW: return "CW";
    case Algorithm::LOTS: return "LOTS";
  }
  return "?";
}

const char* to_string(Layout l) {
  switch (l) {
    case Layout::PatchOnly: return "patch";
    case Layout::PatchNoiseCombo: return "combo";
    case Layout::NoiseOnly: return "noise";
  }
  return "?";
}

const char* to_string(BlackBox b) {
  switch (b) {
    case BlackBox::None: return "None";
    case BlackBox::DI: return "DI";
    case BlackBox::Ensemble: return "Ensemble";
    case BlackBox::DIEnsemble: return "DI+Ensemble";
  }
  return "?";
}

Algorithm algorithm_from_string(const std::string& s) {
  return parse_enum<Algorithm>(s,
                               {{"PGD", Algorithm::PGD},
                                {"IFGSM", Algorithm::IFGSM},
                                {"CW", Algorithm::CW},
                                {"LOTS", Algorithm::LOTS}},
                               "algorithm");
}

Layout layout_from_string(const std::string& s) {
  return parse_enum<Layout>(s,
                            {{"patch", Layout::PatchOnly},
                             {"combo", Layout::PatchNoiseCombo},
                             {"noise", Layout::NoiseOnly}},
                            "layout");
}

BlackBox blackbox_from_string(const std::string& s) {
  return parse_enum<BlackBox>(s,
                              {{"None", BlackBox::None},
                               {"DI", BlackBox::DI},
                               {"Ensemble", BlackBox::Ensemble},
                               {"DI+Ensemble", BlackBox::DIEnsemble}},
                              "black-box technique");
}

void AttackConfig::validate() const {
  require(iterations >= 1, "attack config: iterations must be >= 1");
  require(step_size > 0.0 && std::isfinite(step_size), "attack config: step size must be > 0");
  require(cw_step_size > 0.0 && std::isfinite(cw_step_size),
          "attack config: CW step size must be > 0");
  require(epsilon_patch > 0.0 && epsilon_patch <= 1.0,
          "attack config: epsilon_patch must be in (0, 1]");
  require(epsilon_small > 0.0 && epsilon_small <= 1.0,
          "attack config: epsilon_small must be in (0, 1]");
  require(gamma >= 0.0 && std::isfinite(gamma), "attack config: gamma must be >= 0");
  require(tau >= 0.0 && std::isfinite(tau), "attack config: tau must be >= 0");
  require(init_sigma >= 0.0, "attack config: init_sigma must be >= 0");
  require(crop_fraction >= 0.0 && crop_fraction < 0.5,
          "attack config: crop_fraction must be in [0, 0.5)");
}

const BinaryMask& AttackMasks::smoothness_region() const {
  return patch.count() > 0 ? patch : noise;
}

AttackMasks make_masks(Layout layout, const BinaryMask& patch_mask) {
  const int h = patch_mask.height();
  const int w = patch_mask.width();
  switch (layout) {
    case Layout::PatchOnly: return {patch_mask, BinaryMask(h, w, false)};
    case Layout::PatchNoiseCombo: return {patch_mask, patch_mask.complement()};
    case Layout::NoiseOnly: return {BinaryMask(h, w, false), BinaryMask(h, w, true)};
  }
  return {};
}

// ---- objective -------------------------------------------------------------

AdversarialObjective::AdversarialObjective(const ImageTensor& x_s, const ImageTensor& x_t,
                                           const AttackConfig& cfg, EnsembleSpec models,
                                           AttackMasks masks, QueryAudit* audit)
    : x_s_(x_s), cfg_(cfg), models_(std::move(models)), masks_(std::move(masks)),
      audit_(audit) {
  cfg_.validate();
  models_.validate();
  require(x_s.same_shape(x_t), "adversarial objective: source and target shapes differ");
  require(masks_.patch.matches(x_s) && masks_.noise.matches(x_s),
          "adversarial objective: mask dimensions do not match image");
  require(!masks_.patch.overlaps(masks_.noise),
          "adversarial objective: patch and noise masks overlap");
  trainable_ = masks_.trainable();

  smooth_.kind = cfg_.smoothness;
  smooth_.gamma = cfg_.gamma;
  if (cfg_.thresholds) {
    require(cfg_.thresholds->height() == x_s.height() &&
                cfg_.thresholds->width() == x_s.width(),
            "adversarial objective: threshold matrix dimensions do not match image");
    smooth_.thresholds = *cfg_.thresholds;
  } else {
    smooth_.thresholds = ThresholdMatrix(x_s.height(), x_s.width(), cfg_.tau);
  }

  for (const auto& m : models_.members) {
    if (audit_ != nullptr) audit_->record(m->name());
    targets_.push_back(m->embed(x_t));
  }
}

void AdversarialObjective::set_reference(const ImageTensor& x0) {
  require(x0.same_shape(x_s_), "adversarial objective: reference shape mismatch");
  smooth_.reference = x0;
}

LossEval AdversarialObjective::evaluate(const ImageTensor& x_train, const CropResize* crop,
                                        bool want_grad) const {
  require(x_train.same_shape(x_s_), "adversarial objective: input shape mismatch");
  if (smooth_.kind == SmoothnessKind::Masked) {
    require(!smooth_.reference.empty(), "adversarial objective: reference not set");
  }
  const bool lots = cfg_.algorithm == Algorithm::LOTS;

  SmoothnessEval reg = weighted_smoothness(x_train, x_s_, smooth_,
                                           masks_.smoothness_region(), want_grad);

  const ImageTensor transformed = crop != nullptr ? crop->apply(x_train) : x_train;
  ImageTensor feat_grad;
  if (want_grad) {
    feat_grad = ImageTensor(x_train.height(), x_train.width(), x_train.channels(), 0.0);
  }
  double feature_term = 0.0;
  double distance = 0.0;
  for (std::size_t k = 0; k < models_.members.size(); ++k) {
    const auto& f = *models_.members[k];
    const double w = models_.weights[k];
    const Embedding& target = targets_[k];
    if (audit_ != nullptr) audit_->record(f.name());
    auto upstream = [&](const Embedding& e) {
      Embedding u = lots ? e : feature_distance_grad(e, target, cfg_.metric);
      if (lots) {
        for (std::size_t d = 0; d < u.size(); ++d) u[d] = e[d] - target[d];
      }
      for (double& v : u) v *= w;
      return u;
    };
    ImageTensor g;
    const Embedding e = f.embed_with_grad(transformed, upstream, want_grad ? &g : nullptr);
    const double dist = feature_distance(e, target, cfg_.metric);
    distance += w * dist;
    if (lots) {
      double sq = 0.0;
      for (std::size_t d = 0; d < e.size(); ++d) sq += (e[d] - target[d]) * (e[d] - target[d]);
      feature_term += w * 0.5 * sq;
    } else {
      feature_term += w * dist;
    }
    if (want_grad) {
      auto dst = feat_grad.data();
      auto src = g.data();
      for (std::size_t n = 0; n < dst.size(); ++n) dst[n] += src[n];
    }
  }

  LossEval out;
  out.loss = reg.value + feature_term;
  out.distance = distance;
  if (want_grad) {
    if (crop != nullptr) feat_grad = crop->pullback(feat_grad);
    out.grad = feat_grad + reg.grad;
    const std::size_t plane = out.grad.plane_size();
    auto m = trainable_.data();
    for (int c = 0; c < out.grad.channels(); ++c) {
      for (std::size_t k = 0; k < plane; ++k) {
        if (!m[k]) out.grad.data()[c * plane + k] = 0.0;
      }
    }
  }
  return out;
}

LossEval adversarial_loss(const ImageTensor& x_s, const ImageTensor& x_train,
                          const ImageTensor& x_t, const AttackConfig& cfg,
                          const EnsembleSpec& models, const AttackMasks& masks,
                          const ImageTensor* reference, const CropResize* crop) {
  AdversarialObjective obj(x_s, x_t, cfg, models, masks);
  obj.set_reference(reference != nullptr ? *reference : x_train);
  return obj.evaluate(x_train, crop);
}

// ---- optimizers -------------------------------------------------------------

namespace {

// Per-pixel layer bound: epsilon_patch on M_p, epsilon_small on M_s, 0 elsewhere.
std::vector<double> layer_bounds(const AttackMasks& masks, const AttackConfig& cfg) {
  auto p = masks.patch.data();
  auto s = masks.noise.data();
  std::vector<double> eps(p.size(), 0.0);
  for (std::size_t k = 0; k < eps.size(); ++k) {
    if (p[k]) eps[k] = cfg.epsilon_patch;
    else if (s[k]) eps[k] = cfg.epsilon_small;
  }
  return eps;
}

class Tracker {
 public:
  explicit Tracker(AttackResult& r) : r_(r) {
    r_.best_loss = std::numeric_limits<double>::infinity();
  }
  void record(int t, const LossEval& ev, const ImageTensor& x) {
    r_.loss_trace.push_back(ev.loss);
    r_.distance_trace.push_back(ev.distance);
    r_.iterations_run = t + 1;
    if (ev.loss < r_.best_loss) {
      r_.best_loss = ev.loss;
      r_.best_iteration = t;
      r_.adversarial = x;
    }
  }

 private:
  AttackResult& r_;
};

std::optional<CropResize> draw_crop(const AttackConfig& cfg, const ImageTensor& x, Rng& rng) {
  if (!uses_diversity(cfg.blackbox)) return std::nullopt;
  DiversityConfig dcfg{true, cfg.crop_fraction, 0};
  return sample_crop(x.height(), x.width(), dcfg, rng);
}

enum class StepRule { Sign, InfNormalized };

// Shared loop for PGD, IFGSM and LOTS: x <- Clip_{x_s,eps}(x - alpha * dir(grad)).
AttackResult run_projected(const ImageTensor& x_s, const ImageTensor& x_t,
                           const AttackMasks& masks, const AttackConfig& cfg,
                           const EnsembleSpec& models, const AttackContext& ctx,
                           bool gaussian_init, StepRule rule) {
  AdversarialObjective obj(x_s, x_t, cfg, models, masks, ctx.audit);
  const auto eps = layer_bounds(masks, cfg);
  const std::size_t plane = x_s.plane_size();
  const int C = x_s.channels();
  AttackResult result;

  auto project = [&](ImageTensor& x) {
    auto xv = x.data();
    auto sv = x_s.data();
    for (int c = 0; c < C; ++c) {
      for (std::size_t k = 0; k < plane; ++k) {
        if (eps[k] == 0.0) continue;
        const std::size_t n = c * plane + k;
        double v = std::clamp(xv[n], sv[n] - eps[k], sv[n] + eps[k]);
        if (v < 0.0 || v > 1.0) {
          v = std::clamp(v, 0.0, 1.0);
          ++result.box_clips;
        }
        xv[n] = v;
      }
    }
  };

  ImageTensor x = x_s;
  if (gaussian_init && cfg.init_sigma > 0.0) {
    Rng init_rng(derive_seed(cfg.seed, "pgd-init"));
    auto xv = x.data();
    for (int c = 0; c < C; ++c) {
      for (std::size_t k = 0; k < plane; ++k) {
        if (eps[k] != 0.0) xv[c * plane + k] += cfg.init_sigma * init_rng.normal();
      }
    }
    project(x);
  }
  obj.set_reference(x);
  if (ctx.observer) ctx.observer(0, x);

  Rng di_rng(derive_seed(cfg.seed, "input-diversity"));
  Tracker tracker(result);
  for (int t = 0; t < cfg.iterations; ++t) {
    const auto crop = draw_crop(cfg, x, di_rng);
    const LossEval ev = obj.evaluate(x, crop ? &*crop : nullptr);
    tracker.record(t, ev, x);

    auto g = ev.grad.data();
    double scale = 1.0;
    if (rule == StepRule::InfNormalized) {
      double gmax = 0.0;
      for (double v : g) gmax = std::max(gmax, std::abs(v));
      scale = gmax > 0.0 ? 1.0 / gmax : 0.0;
    }
    auto xv = x.data();
    for (std::size_t n = 0; n < xv.size(); ++n) {
      if (g[n] == 0.0) continue;
      const double dir = rule == StepRule::Sign ? (g[n] > 0.0 ? 1.0 : -1.0) : g[n] * scale;
      xv[n] -= cfg.step_size * dir;
    }
    project(x);
    if (ctx.observer) ctx.observer(t + 1, x);
  }
  return result;
}

}  // namespace

AttackResult run_pgd(const ImageTensor& x_s, const ImageTensor& x_t, const AttackMasks& masks,
                     const AttackConfig& cfg, const EnsembleSpec& models,
                     const AttackContext& ctx) {
  require(cfg.algorithm == Algorithm::PGD, "run_pgd: config algorithm is not PGD");
  return run_projected(x_s, x_t, masks, cfg, models, ctx, true, StepRule::Sign);
}

AttackResult run_ifgsm(const ImageTensor& x_s, const ImageTensor& x_t,
                       const AttackMasks& masks, const AttackConfig& cfg,
                       const EnsembleSpec& models, const AttackContext& ctx) {
  require(cfg.algorithm == Algorithm::IFGSM, "run_ifgsm: config algorithm is not IFGSM");
  return run_projected(x_s, x_t, masks, cfg, models, ctx, false, StepRule::Sign);
}

AttackResult run_lots(const ImageTensor& x_s, const ImageTensor& x_t,
                      const AttackMasks& masks, const AttackConfig& cfg,
                      const EnsembleSpec& models, const AttackContext& ctx) {
  require(cfg.algorithm == Algorithm::LOTS, "run_lots: config algorithm is not LOTS");
  return run_projected(x_s, x_t, masks, cfg, models, ctx, false, StepRule::InfNormalized);
}

AttackResult run_cw(const ImageTensor& x_s, const ImageTensor& x_t, const AttackMasks& masks,
                    const AttackConfig& cfg, const EnsembleSpec& models,
                    const AttackContext& ctx) {
  require(cfg.algorithm == Algorithm::CW, "run_cw: config algorithm is not CW");
  AdversarialObjective obj(x_s, x_t, cfg, models, masks, ctx.audit);
  const auto eps = layer_bounds(masks, cfg);
  const std::size_t plane = x_s.plane_size();
  const int C = x_s.channels();
  auto sv = x_s.data();

  // w lives on trainable entries only; everything else stays x_s.
  std::vector<std::size_t> index;
  for (int c = 0; c < C; ++c) {
    for (std::size_t k = 0; k < plane; ++k) {
      if (eps[k] != 0.0) index.push_back(c * plane + k);
    }
  }
  std::vector<double> w(index.size());
  ImageTensor x = x_s;
  for (std::size_t q = 0; q < index.size(); ++q) {
    const double start = std::clamp(sv[index[q]], kCwMargin, 1.0 - kCwMargin);
    w[q] = cw_from_pixel(start);
    x.data()[index[q]] = cw_to_pixel(w[q]);
  }
  obj.set_reference(x);
  if (ctx.observer) ctx.observer(0, x);

  Rng di_rng(derive_seed(cfg.seed, "input-diversity"));
  AttackResult result;
  Tracker tracker(result);
  for (int t = 0; t < cfg.iterations; ++t) {
    const auto crop = draw_crop(cfg, x, di_rng);
    const LossEval ev = obj.evaluate(x, crop ? &*crop : nullptr);
    tracker.record(t, ev, x);

    auto g = ev.grad.data();
    auto xv = x.data();
    for (std::size_t q = 0; q < index.size(); ++q) {
      const std::size_t n = index[q];
      const double th = std::tanh(w[q]);
      w[q] -= cfg.cw_step_size * g[n] * (1.0 - th * th) / 2.0;
      double v = cw_to_pixel(w[q]);
      const double e = eps[n % plane];
      // Projection onto the layer's epsilon box stays strictly inside (0,1)
      // because the tanh image already does.
      if (v > sv[n] + e) {
        v = sv[n] + e;
        w[q] = cw_from_pixel(v);
        v = cw_to_pixel(w[q]);
      } else if (v < sv[n] - e) {
        v = sv[n] - e;
        w[q] = cw_from_pixel(v);
        v = cw_to_pixel(w[q]);
      }
      xv[n] = v;
    }
    if (ctx.observer) ctx.observer(t + 1, x);
  }
  return result;
}

AttackResult run_attack(const ImageTensor& x_s, const ImageTensor& x_t,
                        const AttackMasks& masks, const AttackConfig& cfg,
                        const EnsembleSpec& models, const AttackContext& ctx) {
  switch (cfg.algorithm) {
    case Algorithm::PGD: return run_pgd(x_s, x_t, masks, cfg, models, ctx);
    case Algorithm::IFGSM: return run_ifgsm(x_s, x_t, masks, cfg, models, ctx);
    case Algorithm::CW: return run_cw(x_s, x_t, masks, cfg, models, ctx);
    case Algorithm::LOTS: return run_lots(x_s, x_t, masks, cfg, models, ctx);
  }
  throw ContractViolation("run_attack: unknown algorithm");
}

// ---- grid ---------------------------------------------------------------------

const char* to_string(Technique t) {
  switch (t) {
    case Technique::NoReg: return "NoReg";
    case Technique::TV: return "TV";
    case Technique::Ours: return "Ours";
    case Technique::ComboTV: return "Combo+TV";
    case Technique::ComboOurs: return "Combo+Ours";
  }
  return "?";
}

Technique technique_from_string(const std::string& s) {
  return parse_enum<Technique>(s,
                               {{"NoReg", Technique::NoReg},
                                {"TV", Technique::TV},
                                {"Ours", Technique::Ours},
                                {"Combo+TV", Technique::ComboTV},
                                {"Combo+Ours", Technique::ComboOurs}},
                               "technique");
}

const char* technique_label(Technique t) {
  switch (t) {
    case Technique::NoReg: return "S0";
    case Technique::TV: return "S1";
    case Technique::Ours: return "S2";
    case Technique::ComboTV: return "S3";
    case Technique::ComboOurs: return "S4";
  }
  return "?";
}

Layout technique_layout(Technique t) {
  return t == Technique::ComboTV || t == Technique::ComboOurs ? Layout::PatchNoiseCombo
                                                              : Layout::PatchOnly;
}

SmoothnessKind technique_smoothness(Technique t) {
  switch (t) {
    case Technique::NoReg: return SmoothnessKind::None;
    case Technique::TV:
    case Technique::ComboTV: return SmoothnessKind::TV;
    case Technique::Ours:
    case Technique::ComboOurs: return SmoothnessKind::Masked;
  }
  return SmoothnessKind::None;
}

bool is_baseline(Technique t) {
  return t == Technique::NoReg || t == Technique::TV || t == Technique::ComboTV;
}

std::string CellKey::str() const {
  return std::string(to_string(algorithm)) + "/" + to_string(blackbox) + "/" +
         to_string(technique);
}

CellKey CellKey::parse(const std::string& s) {
  const auto a = s.find('/');
  const auto b = s.find('/', a == std::string::npos ? a : a + 1);
  require(a != std::string::npos && b != std::string::npos, "malformed cell key '" + s + "'");
  CellKey k;
  k.algorithm = algorithm_from_string(s.substr(0, a));
  k.blackbox = blackbox_from_string(s.substr(a + 1, b - a - 1));
  k.technique = technique_from_string(s.substr(b + 1));
  return k;
}

std::vector<CellKey> full_grid() {
  std::vector<CellKey> cells;
  for (auto a : {Algorithm::PGD, Algorithm::CW, Algorithm::LOTS, Algorithm::IFGSM}) {
    for (auto b : {BlackBox::None, BlackBox::DI, BlackBox::Ensemble, BlackBox::DIEnsemble}) {
      for (auto t : {Technique::NoReg, Technique::TV, Technique::Ours, Technique::ComboTV,
                     Technique::ComboOurs}) {
        cells.push_back({a, b, t});
      }
    }
  }
  return cells;
}

EnsembleSpec ModelRoles::generation_models(BlackBox b) const {
  if (uses_ensemble(b)) return EnsembleSpec::uniform(ensemble);
  return EnsembleSpec::uniform({primary});
}

void ModelRoles::validate() const {
  require(primary != nullptr, "model roles: primary model missing");
  require(!ensemble.empty(), "model roles: ensemble is empty");
  for (const auto& h : held_out) {
    require(h != nullptr, "model roles: null held-out model");
    require(h->name() != primary->name(), "model roles: held-out model is the primary");
    for (const auto& e : ensemble) {
      require(h->name() != e->name(), "model roles: held-out model is in the ensemble");
    }
  }
}

AttackConfig cell_config(const GridSettings& settings, const CellKey& key, int pair_index) {
  AttackConfig cfg = settings.base;
  cfg.algorithm = key.algorithm;
  cfg.blackbox = key.blackbox;
  cfg.layout = technique_layout(key.technique);
  cfg.smoothness = technique_smoothness(key.technique);
  cfg.iterations = key.algorithm == Algorithm::CW ? settings.cw_iterations : settings.iterations;
  cfg.seed = derive_seed(settings.master_seed, key.str() + "#" + std::to_string(pair_index));
  return cfg;
}

CellRun run_cell(const GridSettings& settings, const CellKey& key, int pair_index,
                 const FacePair& pair, const BinaryMask& patch_mask,
                 const ModelRoles& roles, const IterateObserver& observer) {
  CellRun run;
  run.key = key;
  run.pair_index = pair_index;
  run.config = cell_config(settings, key, pair_index);
  run.seed = run.config.seed;
  try {
    const EnsembleSpec models = roles.generation_models(key.blackbox);
    run.generation_models = models.member_names();
    QueryAudit audit;
    AttackContext ctx{&audit, observer};
    run.result = run_attack(pair.source, pair.target, make_masks(run.config.layout, patch_mask),
                            run.config, models, ctx);
    const auto queried = audit.queried();
    run.queried_models.assign(queried.begin(), queried.end());
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  return run;
}

std::vector<CellRun> run_grid(const std::vector<FacePair>& pairs,
                              const std::vector<CellKey>& cells,
                              const BinaryMask& patch_mask, const ModelRoles& roles,
                              const GridSettings& settings) {
  roles.validate();
  require(!pairs.empty(), "run_grid: no source-target pairs");
  std::vector<CellRun> runs(cells.size() * pairs.size());
  parallel_for(runs.size(), settings.workers, [&](std::size_t i) {
    const std::size_t c = i / pairs.size();
    const int p = static_cast<int>(i % pairs.size());
    runs[i] = run_cell(settings, cells[c], p, pairs[p], patch_mask, roles);
  });
  return runs;
}

}  // namespace advface
