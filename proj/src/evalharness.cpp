#include "advface/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "advface/errors.hpp"
#include "advface/faces.hpp"
#include "advface/parallel.hpp"
#include "advface/random.hpp"
#include "advface/smoothness.hpp"

namespace advface {

using nlohmann::json;

double verification_score(const Embedding& probe, const Embedding& reference, Metric metric) {
  const double d = feature_distance(probe, reference, metric);
  return metric == Metric::L2 ? d : 1.0 - d;
}

double f1_at(std::span<const double> genuine, std::span<const double> impostor,
             const VerificationThreshold& t) {
  std::size_t tp = 0, fp = 0;
  for (double s : genuine) tp += t.accepts(s) ? 1 : 0;
  for (double s : impostor) fp += t.accepts(s) ? 1 : 0;
  const std::size_t fn = genuine.size() - tp;
  const double denom = static_cast<double>(2 * tp + fp + fn);
  return denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
}

VerificationThreshold calibrate_threshold(std::span<const double> genuine,
                                          std::span<const double> impostor, Metric metric,
                                          std::string model) {
  require(!genuine.empty(), "calibrate_threshold: no genuine scores");
  require(!impostor.empty(), "calibrate_threshold: no impostor scores");
  std::vector<double> all(genuine.begin(), genuine.end());
  all.insert(all.end(), impostor.begin(), impostor.end());
  for (double s : all) require(std::isfinite(s), "calibrate_threshold: non-finite score");
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  // Orient so that larger "accept index" accepts more pairs.
  if (metric == Metric::Cosine) std::reverse(all.begin(), all.end());

  // Candidate k accepts exactly the k+1 most genuine-looking unique scores.
  std::vector<double> cuts;
  for (std::size_t i = 0; i + 1 < all.size(); ++i) cuts.push_back(0.5 * (all[i] + all[i + 1]));
  cuts.push_back(all.back());

  VerificationThreshold t{metric, 0.0, std::move(model), -1.0};
  std::vector<double> f1s(cuts.size());
  double best = -1.0;
  for (std::size_t k = 0; k < cuts.size(); ++k) {
    t.value = cuts[k];
    f1s[k] = f1_at(genuine, impostor, t);
    best = std::max(best, f1s[k]);
  }
  // First maximal run of candidates; centre of the score interval it spans.
  std::size_t first = 0;
  while (f1s[first] != best) ++first;
  std::size_t last = first;
  while (last + 1 < cuts.size() && f1s[last + 1] == best) ++last;
  if (first == last) {
    t.value = cuts[first];
  } else {
    // Scores all[first+1..last] are interior to the run; any cut in
    // (all[first], all[last+1]) gives the same decisions.
    const double lo = all[first];
    const double hi = last + 1 < all.size() ? all[last + 1] : all[last];
    t.value = 0.5 * (lo + hi);
    if (f1_at(genuine, impostor, {metric, t.value, {}, 0.0}) != best) t.value = cuts[first];
  }
  t.f1 = best;
  return t;
}

CalibrationSet make_calibration_set(int n_identities, std::uint64_t seed, int size) {
  require(n_identities >= 2, "make_calibration_set: need at least two identities");
  std::vector<FaceIdentity> ids;
  for (int k = 0; k < n_identities; ++k)
    ids.push_back(make_identity(derive_seed(seed, "calibration-id#" + std::to_string(k))));
  CalibrationSet set;
  for (int k = 0; k < n_identities; ++k) {
    set.genuine.push_back({render_face(ids[k], 1, size), render_face(ids[k], 2, size)});
    const int other = (k + 1) % n_identities;
    set.impostor.push_back({render_face(ids[k], 1, size), render_face(ids[other], 2, size)});
  }
  return set;
}

VerificationThreshold calibrate_model(const FeatureExtractor& model, const CalibrationSet& set,
                                      Metric metric) {
  auto scores = [&](const std::vector<ImagePair>& pairs) {
    std::vector<double> out;
    for (const auto& p : pairs)
      out.push_back(verification_score(model.embed(p.a), model.embed(p.b), metric));
    return out;
  };
  const auto g = scores(set.genuine);
  const auto i = scores(set.impostor);
  return calibrate_threshold(g, i, metric, model.name());
}

const VerificationThreshold& threshold_for(const ThresholdMap& thresholds,
                                           const std::string& model) {
  const auto it = thresholds.find(model);
  if (it == thresholds.end())
    throw ContractViolation("no verification threshold for model '" + model + "'");
  return it->second;
}

bool digital_match(const FeatureExtractor& model, const ImageTensor& probe,
                   const ImageTensor& target, const ThresholdMap& thresholds, double* score) {
  const auto& t = threshold_for(thresholds, model.name());
  const double s = verification_score(model.embed(probe), model.embed(target), t.metric);
  if (score != nullptr) *score = s;
  return t.accepts(s);
}

double digital_asr(const std::vector<ImageTensor>& adversarial,
                   const std::vector<ImageTensor>& targets,
                   const std::vector<ExtractorPtr>& models, const ThresholdMap& thresholds) {
  require(adversarial.size() == targets.size(), "digital_asr: adversarial/target count mismatch");
  require(!adversarial.empty() && !models.empty(), "digital_asr: nothing to evaluate");
  for (const auto& m : models) threshold_for(thresholds, m->name());
  std::size_t hits = 0;
  for (const auto& m : models)
    for (std::size_t k = 0; k < adversarial.size(); ++k)
      hits += digital_match(*m, adversarial[k], targets[k], thresholds) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(adversarial.size() * models.size());
}

// ---- per-run evaluation -----------------------------------------------------

RunEvaluation evaluate_run(const CellRun& run, const FacePair& pair,
                           const BinaryMask& patch_mask, const ModelRoles& roles,
                           const ThresholdMap& thresholds, const CaptureGrid& grid,
                           const EvalSettings& settings) {
  RunEvaluation ev;
  ev.key = run.key;
  ev.pair_index = run.pair_index;
  if (!run.error.empty()) {
    ev.error = run.error;
    return ev;
  }
  const ImageTensor& adv = run.result.adversarial;
  const ImageTensor r = adv - pair.source;
  ev.patch_tv = tv_loss(r, patch_mask);
  const AttackMasks masks = make_masks(run.config.layout, patch_mask);
  ev.noise_linf = masks.noise.count() > 0 ? max_abs_diff(adv, pair.source, masks.noise) : 0.0;

  const bool physical = run.pair_index < settings.physical_pairs;
  auto outcome = [&](const FeatureExtractor& m) {
    ModelOutcome o;
    o.model = m.name();
    const auto& t = threshold_for(thresholds, m.name());
    const Embedding target = m.embed(pair.target);
    o.digital_score = verification_score(m.embed(adv), target, t.metric);
    o.digital_success = t.accepts(o.digital_score);
    if (physical) {
      if (o.digital_success) {
        const PhysicalEval pe = physical_asr(adv, pair.target, grid, m, t, settings.physical);
        o.physical_asr = pe.asr;
        o.retained_captures = pe.retained;
      } else {
        o.physical_asr = 0.0;
      }
    }
    return o;
  };
  for (const auto& m : roles.generation_models(run.key.blackbox).members)
    ev.whitebox.push_back(outcome(*m));
  for (const auto& m : roles.held_out) ev.blackbox.push_back(outcome(*m));
  return ev;
}

std::vector<std::string> blackbox_hygiene_violations(const std::vector<CellRun>& runs,
                                                     const ModelRoles& roles) {
  std::set<std::string> held;
  for (const auto& m : roles.held_out) held.insert(m->name());
  std::vector<std::string> out;
  for (const auto& run : runs)
    for (const auto& q : run.queried_models)
      if (held.contains(q))
        out.push_back(run.key.str() + "#" + std::to_string(run.pair_index) + " queried " + q);
  return out;
}

// ---- aggregation ------------------------------------------------------------

namespace {

const std::vector<ModelOutcome>& outcomes(const RunEvaluation& e, EvalMode mode) {
  return mode == EvalMode::WhiteBox ? e.whitebox : e.blackbox;
}

std::optional<double> mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::optional<double> digital_asr(std::span<const RunEvaluation> evals, EvalMode mode) {
  std::vector<double> v;
  for (const auto& e : evals)
    for (const auto& o : outcomes(e, mode)) v.push_back(o.digital_success ? 1.0 : 0.0);
  return mean_of(v);
}

std::optional<double> physical_asr(std::span<const RunEvaluation> evals, EvalMode mode) {
  std::vector<double> v;
  for (const auto& e : evals)
    for (const auto& o : outcomes(e, mode))
      if (o.physical_asr) v.push_back(*o.physical_asr);
  return mean_of(v);
}

std::optional<double> physical_transferability(std::span<const RunEvaluation> evals,
                                               EvalMode mode) {
  std::vector<double> v;
  for (const auto& e : evals)
    for (const auto& o : outcomes(e, mode))
      if (o.physical_asr && o.digital_success) v.push_back(*o.physical_asr);
  return mean_of(v);
}

std::map<Technique, std::optional<double>> tv_statistics(std::span<const RunEvaluation> evals) {
  std::map<Technique, std::vector<double>> acc;
  for (const auto& e : evals)
    if (e.error.empty()) acc[e.key.technique].push_back(e.patch_tv);
  std::map<Technique, std::optional<double>> out;
  for (const auto& [t, v] : acc) out[t] = mean_of(v);
  return out;
}

AblationReport build_report(const std::vector<RunEvaluation>& evals,
                            const std::vector<CellKey>& cells) {
  std::map<CellKey, std::vector<RunEvaluation>> by_cell;
  for (const auto& e : evals) by_cell[e.key].push_back(e);

  AblationReport rep;
  std::set<CellKey> seen;
  for (const auto& key : cells) {
    require(seen.insert(key).second, "build_report: duplicate cell " + key.str());
    CellReport c;
    c.key = key;
    const auto it = by_cell.find(key);
    if (it != by_cell.end()) {
      const auto& v = it->second;
      c.runs = static_cast<int>(v.size());
      std::vector<double> tvs;
      for (const auto& e : v) {
        if (!e.error.empty()) ++c.failed;
        else tvs.push_back(e.patch_tv);
      }
      c.digital_whitebox = digital_asr(v, EvalMode::WhiteBox);
      c.digital_blackbox = digital_asr(v, EvalMode::BlackBox);
      c.physical_whitebox = physical_asr(v, EvalMode::WhiteBox);
      c.physical_blackbox = physical_asr(v, EvalMode::BlackBox);
      c.transfer_whitebox = physical_transferability(v, EvalMode::WhiteBox);
      c.transfer_blackbox = physical_transferability(v, EvalMode::BlackBox);
      c.mean_tv = mean_of(tvs);
    }
    rep.cells.push_back(c);
  }

  std::vector<RunEvaluation> in_cells;
  for (const auto& e : evals)
    if (seen.contains(e.key)) in_cells.push_back(e);
  rep.technique_tv = tv_statistics(in_cells);

  std::map<Technique, std::map<Algorithm, std::vector<RunEvaluation>>> pooled;
  for (const auto& key : cells) pooled[key.technique][key.algorithm];
  for (const auto& e : in_cells) pooled[e.key.technique][e.key.algorithm].push_back(e);
  for (const auto& [t, row] : pooled)
    for (const auto& [a, v] : row)
      rep.transferability[t][a] = physical_transferability(v, EvalMode::WhiteBox);
  return rep;
}

// ---- emission ---------------------------------------------------------------

namespace {

std::string fmt(const std::optional<double>& v) {
  if (!v) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

std::string report_csv(const AblationReport& report) {
  std::ostringstream os;
  os << "cell,algorithm,blackbox,technique,runs,failed,digital_wb,digital_bb,physical_wb,"
        "physical_bb,transfer_wb,transfer_bb,mean_tv\n";
  for (const auto& c : report.cells) {
    os << c.key.str() << ',' << to_string(c.key.algorithm) << ',' << to_string(c.key.blackbox)
       << ',' << to_string(c.key.technique) << ',' << c.runs << ',' << c.failed << ','
       << fmt(c.digital_whitebox) << ',' << fmt(c.digital_blackbox) << ','
       << fmt(c.physical_whitebox) << ',' << fmt(c.physical_blackbox) << ','
       << fmt(c.transfer_whitebox) << ',' << fmt(c.transfer_blackbox) << ',' << fmt(c.mean_tv)
       << '\n';
  }
  return os.str();
}

std::string report_json(const AblationReport& report) {
  json cells = json::array();
  for (const auto& c : report.cells) {
    cells.push_back({{"cell", c.key.str()},
                     {"algorithm", to_string(c.key.algorithm)},
                     {"blackbox", to_string(c.key.blackbox)},
                     {"technique", to_string(c.key.technique)},
                     {"runs", c.runs},
                     {"failed", c.failed},
                     {"digital_whitebox", opt_json(c.digital_whitebox)},
                     {"digital_blackbox", opt_json(c.digital_blackbox)},
                     {"physical_whitebox", opt_json(c.physical_whitebox)},
                     {"physical_blackbox", opt_json(c.physical_blackbox)},
                     {"transfer_whitebox", opt_json(c.transfer_whitebox)},
                     {"transfer_blackbox", opt_json(c.transfer_blackbox)},
                     {"mean_tv", opt_json(c.mean_tv)}});
  }
  json tv = json::object();
  for (const auto& [t, v] : report.technique_tv) tv[to_string(t)] = opt_json(v);
  json transfer = json::object();
  for (const auto& [t, row] : report.transferability) {
    json r = json::object();
    for (const auto& [a, v] : row) r[to_string(a)] = opt_json(v);
    transfer[technique_label(t)] = r;
  }
  json out = {{"cells", cells}, {"technique_tv", tv}, {"transferability", transfer}};
  return out.dump(2) + "\n";
}

std::string transferability_csv(const AblationReport& report) {
  std::set<Algorithm> algos;
  for (const auto& [t, row] : report.transferability)
    for (const auto& [a, v] : row) algos.insert(a);
  std::ostringstream os;
  os << "technique,label";
  for (auto a : algos) os << ',' << to_string(a);
  os << '\n';
  for (const auto& [t, row] : report.transferability) {
    os << to_string(t) << ',' << technique_label(t);
    for (auto a : algos) {
      const auto it = row.find(a);
      os << ',' << fmt(it == row.end() ? std::nullopt : it->second);
    }
    os << '\n';
  }
  return os.str();
}

std::string asr_bars_csv(const AblationReport& report, bool physical, EvalMode mode) {
  std::ostringstream os;
  os << "cell,asr\n";
  for (const auto& c : report.cells) {
    const auto& v = physical ? (mode == EvalMode::WhiteBox ? c.physical_whitebox
                                                           : c.physical_blackbox)
                             : (mode == EvalMode::WhiteBox ? c.digital_whitebox
                                                           : c.digital_blackbox);
    os << c.key.str() << ',' << fmt(v) << '\n';
  }
  return os.str();
}

namespace {

json outcomes_json(const std::vector<ModelOutcome>& v) {
  json a = json::array();
  for (const auto& o : v)
    a.push_back({{"model", o.model},
                 {"digital_success", o.digital_success},
                 {"digital_score", o.digital_score},
                 {"physical_asr", opt_json(o.physical_asr)},
                 {"retained_captures", o.retained_captures}});
  return a;
}

std::vector<ModelOutcome> outcomes_from(const json& a) {
  std::vector<ModelOutcome> v;
  for (const auto& j : a) {
    ModelOutcome o;
    o.model = j.at("model").get<std::string>();
    o.digital_success = j.at("digital_success").get<bool>();
    o.digital_score = j.at("digital_score").get<double>();
    o.physical_asr = opt_from(j.at("physical_asr"));
    o.retained_captures = j.at("retained_captures").get<std::size_t>();
    v.push_back(o);
  }
  return v;
}

}  // namespace

std::string to_json(const RunEvaluation& e) {
  json j = {{"cell", e.key.str()},
            {"pair_index", e.pair_index},
            {"error", e.error},
            {"patch_tv", e.patch_tv},
            {"noise_linf", e.noise_linf},
            {"whitebox", outcomes_json(e.whitebox)},
            {"blackbox", outcomes_json(e.blackbox)}};
  return j.dump(2) + "\n";
}

RunEvaluation run_evaluation_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    RunEvaluation e;
    e.key = CellKey::parse(j.at("cell").get<std::string>());
    e.pair_index = j.at("pair_index").get<int>();
    e.error = j.at("error").get<std::string>();
    e.patch_tv = j.at("patch_tv").get<double>();
    e.noise_linf = j.at("noise_linf").get<double>();
    e.whitebox = outcomes_from(j.at("whitebox"));
    e.blackbox = outcomes_from(j.at("blackbox"));
    return e;
  } catch (const json::exception& ex) {
    throw CorruptDataError(std::string("evaluation record: ") + ex.what());
  }
}

// ---- epsilon sweep ------------------------------------------------------------

namespace {

double box_headroom(const ImageTensor& x) {
  double m = 0.0;
  for (double v : x.data()) m = std::max(m, std::max(v, 1.0 - v));
  return m;
}

}  // namespace

std::vector<SweepPoint> epsilon_sweep(const SweepSettings& settings,
                                      const std::vector<FacePair>& pairs,
                                      const ExtractorPtr& model,
                                      const VerificationThreshold& threshold,
                                      const CaptureGrid& grid) {
  require(model != nullptr, "epsilon_sweep: no model");
  require(!pairs.empty(), "epsilon_sweep: no face pairs");
  require(settings.successes_per_epsilon >= 1, "epsilon_sweep: successes_per_epsilon < 1");
  require(!settings.epsilons.empty(), "epsilon_sweep: no epsilon values");
  for (double e : settings.epsilons)
    require(std::isfinite(e) && e >= 0.0 && e <= 1.0, "epsilon_sweep: epsilon outside [0, 1]");
  require(threshold.model.empty() || threshold.model == model->name(),
          "epsilon_sweep: threshold was calibrated for model " + threshold.model);

  const EnsembleSpec models = EnsembleSpec::uniform({model});
  const int rows = pairs.front().source.height();
  const int cols = pairs.front().source.width();
  const AttackMasks masks = make_masks(Layout::NoiseOnly, BinaryMask(rows, cols, false));
  const std::size_t want = static_cast<std::size_t>(settings.successes_per_epsilon);

  std::vector<SweepPoint> points;
  for (double eps : settings.epsilons) {
    SweepPoint pt;
    pt.epsilon = eps;
    std::vector<std::size_t> chosen;
    std::vector<ImageTensor> adv_of(pairs.size());

    if (eps == 0.0) {
      for (std::size_t k = 0; k < pairs.size() && chosen.size() < want; ++k) {
        adv_of[k] = pairs[k].source;
        chosen.push_back(k);
      }
      pt.attempted = static_cast<int>(chosen.size());
      for (auto k : chosen) {
        const double s = verification_score(model->embed(pairs[k].source),
                                            model->embed(pairs[k].target), threshold.metric);
        pt.digital_successes += threshold.accepts(s) ? 1 : 0;
      }
    } else {
      const std::size_t batch = static_cast<std::size_t>(std::max(1, settings.workers));
      std::vector<char> success(pairs.size(), 0);
      for (std::size_t start = 0; start < pairs.size() && chosen.size() < want; start += batch) {
        const std::size_t n = std::min(batch, pairs.size() - start);
        parallel_for(n, settings.workers, [&](std::size_t i) {
          const std::size_t k = start + i;
          AttackConfig cfg = settings.base;
          cfg.layout = Layout::NoiseOnly;
          cfg.epsilon_small = eps;
          cfg.blackbox = BlackBox::None;
          char tag[64];
          std::snprintf(tag, sizeof tag, "sweep#%.6f#%zu", eps, k);
          cfg.seed = derive_seed(settings.master_seed, std::string(tag));
          const AttackResult res =
              run_attack(pairs[k].source, pairs[k].target, masks, cfg, models);
          adv_of[k] = res.adversarial;
          const double s = verification_score(model->embed(res.adversarial),
                                              model->embed(pairs[k].target), threshold.metric);
          success[k] = threshold.accepts(s) ? 1 : 0;
        });
        for (std::size_t i = 0; i < n; ++i)
          if (success[start + i] && chosen.size() < want) chosen.push_back(start + i);
      }
      // Attempts counted in pair order up to the quota, independent of batching.
      pt.attempted = static_cast<int>(chosen.size() == want ? chosen.back() + 1 : pairs.size());
      pt.digital_successes = static_cast<int>(chosen.size());
    }

    pt.physical_asr.resize(chosen.size());
    double headroom = 0.0;
    for (auto k : chosen) headroom = std::max(headroom, box_headroom(pairs[k].source));
    pt.linf_bound = std::min(eps, headroom);
    parallel_for(chosen.size(), settings.workers, [&](std::size_t i) {
      const std::size_t k = chosen[i];
      pt.physical_asr[i] =
          physical_asr(adv_of[k], pairs[k].target, grid, *model, threshold, settings.physical).asr;
    });
    for (auto k : chosen) pt.linf = std::max(pt.linf, max_abs_diff(adv_of[k], pairs[k].source));
    pt.mean_physical_asr = mean_of(pt.physical_asr);
    if (pt.mean_physical_asr) {
      const double n = static_cast<double>(pt.physical_asr.size());
      double ss = 0.0;
      for (double v : pt.physical_asr) ss += (v - *pt.mean_physical_asr) * (v - *pt.mean_physical_asr);
      pt.standard_error = n > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
    }
    points.push_back(std::move(pt));
  }
  return points;
}

std::string sweep_csv(const std::vector<SweepPoint>& points) {
  std::ostringstream os;
  os << "epsilon,attempted,digital_successes,mean_physical_asr,standard_error,linf,linf_bound\n";
  for (const auto& p : points) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", p.epsilon);
    os << buf << ',' << p.attempted << ',' << p.digital_successes << ','
       << fmt(p.mean_physical_asr) << ',' << fmt(p.standard_error) << ',' << fmt(p.linf) << ','
       << fmt(p.linf_bound) << '\n';
  }
  return os.str();
}

}  // namespace advface
