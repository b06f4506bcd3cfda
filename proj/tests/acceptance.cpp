#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "advface/cli.hpp"
#include "advface/errors.hpp"
#include "advface/parallel.hpp"
#include "advface/toystack.hpp"
#include "test_util.hpp"

using namespace advface;
using advface::testing::central_difference;
using advface::testing::random_image;
using advface::testing::relative_error;
namespace fs = std::filesystem;

namespace {

struct Settings {
  int size = 64;
  int pairs = 20;
  int physical_pairs = 5;
  int iterations = 200;
  int cw_iterations = 700;
  int smoke_pairs = 2;
  int workers = 0;
  double blur = 0.5;
  double print_blur = 0.3;
  std::string out = "acceptance_out";
};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string opt(const std::optional<double>& v) { return v ? fmt("%.4f", *v) : "NA"; }

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---- 1: gradient oracles -------------------------------------------------------

struct GradCheck {
  int points = 0;
  double worst = 0.0;
  void add(double analytic, double numeric) {
    ++points;
    worst = std::max(worst, relative_error(analytic, numeric));
  }
};

GradCheck check_points(const std::function<double(const ImageTensor&)>& f, const ImageTensor& g,
                       const ImageTensor& x, Rng& rng, int n,
                       const std::function<bool(std::size_t)>& usable = {}) {
  GradCheck c;
  for (int tries = 0; c.points < n && tries < 50 * n; ++tries) {
    const std::size_t k = rng.uniform_int(x.size() - 1);
    if (usable && !usable(k)) continue;
    c.add(g.data()[k], central_difference(f, x, k, 1e-6));
  }
  return c;
}

Outcome criterion1() {
  const auto t0 = Clock::now();
  Rng rng(101);
  const int n = 16;
  std::vector<std::string> parts;
  bool ok = true;
  auto record = [&](const std::string& what, const GradCheck& c) {
    const bool pass = c.points >= 50 && c.worst < 1e-4;
    ok = ok && pass;
    parts.push_back(what + " " + std::to_string(c.points) + "pts max " + fmt("%.1e", c.worst));
  };

  {
    GradCheck all;
    for (int rep = 0; rep < 10; ++rep) {
      const ImageTensor r = random_image(n, n, 3, rng);
      const BinaryMask region = advface::testing::random_mask(n, n, rng, 0.7);
      const auto g = tv_loss_grad(r, region);
      const auto c = check_points([&](const ImageTensor& y) { return tv_loss(y, region); }, g, r,
                                  rng, 6);
      all.points += c.points;
      all.worst = std::max(all.worst, c.worst);
    }
    record("tv", all);
  }
  {
    GradCheck all;
    for (int rep = 0; rep < 10; ++rep) {
      SmoothnessSpec spec;
      spec.kind = SmoothnessKind::Masked;
      spec.gamma = 1.0;
      spec.reference = random_image(n, n, 3, rng);
      spec.thresholds = ThresholdMatrix(n, n, 0.1);
      const ImageTensor x = random_image(n, n, 3, rng);
      const BinaryMask region = advface::testing::random_mask(n, n, rng, 0.8);
      const auto g = masked_smoothness_grad(x, spec, region);
      const auto c = check_points(
          [&](const ImageTensor& y) { return masked_smoothness(y, spec, region); }, g, x, rng, 6,
          [&](std::size_t k) {
            return std::abs(std::abs(x.data()[k] - spec.reference.data()[k]) - 0.1) > 1e-4;
          });
      all.points += c.points;
      all.worst = std::max(all.worst, c.worst);
    }
    record("masked", all);
  }
  for (auto arch : {Architecture::A, Architecture::B, Architecture::C, Architecture::D}) {
    ExtractorSpec s;
    s.name = to_string(arch);
    s.architecture = arch;
    s.seed = 7;
    s.input_height = n;
    s.input_width = n;
    const FeatureExtractor f(s);
    const ImageTensor x = random_image(n, n, 3, rng);
    Embedding u(static_cast<std::size_t>(f.embed_dim()));
    for (double& v : u) v = rng.normal();
    auto proj = [&](const ImageTensor& y) {
      const Embedding e = f.embed(y);
      double d = 0.0;
      for (std::size_t k = 0; k < e.size(); ++k) d += e[k] * u[k];
      return d;
    };
    record(std::string("net") + to_string(arch),
           check_points(proj, f.embed_input_grad(x, u), x, rng, 50));
  }
  {
    GradCheck all;
    const ToyStack stack = make_toy_stack(n, 5, Metric::L2, 4);
    const auto pairs = make_face_pairs(2, 6, n);
    const BinaryMask patch = stack.patch;
    int rep = 0;
    for (auto t : {Technique::NoReg, Technique::TV, Technique::Ours, Technique::ComboTV,
                   Technique::ComboOurs}) {
      for (auto alg : {Algorithm::PGD, Algorithm::LOTS}) {
        AttackConfig c;
        c.algorithm = alg;
        c.layout = technique_layout(t);
        c.smoothness = technique_smoothness(t);
        c.gamma = 0.5;
        c.blackbox = rep % 2 ? BlackBox::DIEnsemble : BlackBox::Ensemble;
        ++rep;
        const AttackMasks masks = make_masks(c.layout, patch);
        const BinaryMask trainable = masks.trainable();
        ImageTensor x = pairs[0].source;
        for (int ch = 0; ch < 3; ++ch)
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
              if (trainable(i, j)) x.at(ch, i, j) = rng.uniform(0.1, 0.9);
        const CropResize crop{n, n, 1, 0, 0, 1};
        const CropResize* cp = uses_diversity(c.blackbox) ? &crop : nullptr;
        const EnsembleSpec ens = stack.roles.generation_models(c.blackbox);
        const ImageTensor& ref = pairs[0].source;
        const LossEval ev =
            adversarial_loss(pairs[0].source, x, pairs[0].target, c, ens, masks, &ref, cp);
        const auto chk = check_points(
            [&](const ImageTensor& y) {
              return adversarial_loss(pairs[0].source, y, pairs[0].target, c, ens, masks, &ref, cp)
                  .loss;
            },
            ev.grad, x, rng, 6, [&](std::size_t k) {
              const int pix = static_cast<int>(k % x.plane_size());
              if (!trainable(pix / n, pix % n)) return false;
              return std::abs(std::abs(x.data()[k] - ref.data()[k]) - c.tau) > 1e-4;
            });
        all.points += chk.points;
        all.worst = std::max(all.worst, chk.worst);
      }
    }
    record("objective", all);
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 60.0;
  std::string detail;
  for (const auto& p : parts) detail += p + "; ";
  return {ok, detail + fmt("%.1fs", secs)};
}

// ---- 2, 3: smoothness contracts ---------------------------------------------------

Outcome criterion2() {
  Rng rng(202);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    SmoothnessSpec spec;
    spec.kind = SmoothnessKind::Masked;
    spec.gamma = 1.0;
    spec.reference = random_image(8, 8, 3, rng);
    spec.thresholds = ThresholdMatrix(8, 8, 0.0);
    const ImageTensor x = random_image(8, 8, 3, rng);
    const BinaryMask full = BinaryMask::full(8, 8);
    ImageTensor dev = x;
    for (std::size_t n = 0; n < dev.size(); ++n) dev.data()[n] -= spec.reference.data()[n];
    worst = std::max(worst, std::abs(masked_smoothness(x, spec, full) - tv_loss(dev, full)));
  }
  return {worst <= 1e-10, "1000 cases, max |diff| " + fmt("%.2e", worst)};
}

Outcome criterion3() {
  Rng rng(303);
  int bad = 0;
  for (int k = 0; k < 100; ++k) {
    const int h = 4 + static_cast<int>(rng.uniform_int(8));
    SmoothnessSpec spec;
    spec.kind = SmoothnessKind::Masked;
    spec.gamma = 1.0;
    spec.reference = random_image(h, h, 3, rng, 0.2, 0.8);
    std::vector<double> tau(static_cast<std::size_t>(h * h));
    for (double& t : tau) t = rng.uniform(0.02, 0.2);
    spec.thresholds = ThresholdMatrix(h, h, tau);
    ImageTensor x = spec.reference;
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < h; ++j)
          x.at(c, i, j) += rng.uniform(-0.99, 0.99) * tau[static_cast<std::size_t>(i * h + j)];
    const BinaryMask full = BinaryMask::full(h, h);
    bool zero = masked_smoothness(x, spec, full) == 0.0;
    const ImageTensor grad = masked_smoothness_grad(x, spec, full);
    for (double g : grad.data()) zero = zero && g == 0.0;
    bad += zero ? 0 : 1;
  }
  return {bad == 0, std::to_string(100 - bad) + "/100 cases exactly zero (value and gradient)"};
}

// ---- shared full grid ------------------------------------------------------------

struct GridData {
  ToyStack stack;
  std::vector<FacePair> pairs;
  std::vector<CellRun> runs;
  std::vector<RunEvaluation> evals;
  AblationReport report;
  double attack_seconds = 0.0;
  double eval_seconds = 0.0;
};

CaptureGridSpec capture_spec(const Settings& s) {
  CaptureGridSpec spec;
  spec.base.blur_sigma = s.blur;
  spec.base.print_blur_sigma = s.print_blur;
  spec.seed = 4;
  return spec;
}

GridData run_full_grid(const Settings& s) {
  GridData d{make_toy_stack(s.size, 1), make_face_pairs(s.pairs, 2, s.size), {}, {}, {}, 0, 0};
  GridSettings gs;
  gs.iterations = s.iterations;
  gs.cw_iterations = s.cw_iterations;
  gs.master_seed = 3;
  gs.workers = s.workers;
  const auto t0 = Clock::now();
  d.runs = run_grid(d.pairs, full_grid(), d.stack.patch, d.stack.roles, gs);
  d.attack_seconds = seconds_since(t0);
  const CaptureGrid grid = make_capture_grid(capture_spec(s));
  EvalSettings es;
  es.physical_pairs = s.physical_pairs;
  const auto t1 = Clock::now();
  d.evals.resize(d.runs.size());
  parallel_for(d.runs.size(), s.workers, [&](std::size_t k) {
    d.evals[k] = evaluate_run(d.runs[k], d.pairs[d.runs[k].pair_index], d.stack.patch,
                              d.stack.roles, d.stack.thresholds, grid, es);
  });
  d.eval_seconds = seconds_since(t1);
  d.report = build_report(d.evals, full_grid());
  fs::create_directories(s.out);
  std::ofstream(fs::path(s.out) / "report.csv") << report_csv(d.report);
  std::ofstream(fs::path(s.out) / "report.json") << report_json(d.report);
  std::ofstream(fs::path(s.out) / "transferability.csv") << transferability_csv(d.report);
  return d;
}

std::vector<RunEvaluation> of_technique(const GridData& d, Technique t) {
  std::vector<RunEvaluation> v;
  for (const auto& e : d.evals)
    if (e.key.technique == t) v.push_back(e);
  return v;
}

const std::vector<Technique> kTechniques{Technique::NoReg, Technique::TV, Technique::Ours,
                                         Technique::ComboTV, Technique::ComboOurs};

Outcome criterion4(const GridData& d) {
  std::map<Technique, double> tv;
  std::map<Technique, std::size_t> count;
  for (auto t : {Technique::NoReg, Technique::TV, Technique::Ours}) {
    const auto v = of_technique(d, t);
    count[t] = v.size();
    tv[t] = d.report.technique_tv.at(t).value_or(NAN);
  }
  const double reg_mean = (tv[Technique::TV] + tv[Technique::Ours]) / 2;
  const double gap = tv[Technique::NoReg] - reg_mean;
  const bool enough = count[Technique::NoReg] >= 20 && count[Technique::TV] >= 20 &&
                      count[Technique::Ours] >= 20;
  const bool margin = tv[Technique::NoReg] >= 1.4 * tv[Technique::TV] &&
                      tv[Technique::NoReg] >= 1.4 * tv[Technique::Ours];
  const bool close = std::abs(tv[Technique::Ours] - tv[Technique::TV]) < 0.25 * gap;
  std::ostringstream os;
  os << "mean patch TV NoReg " << fmt("%.2f", tv[Technique::NoReg]) << " TV "
     << fmt("%.2f", tv[Technique::TV]) << " Ours " << fmt("%.2f", tv[Technique::Ours])
     << " (n=" << count[Technique::TV] << "/technique); |Ours-TV| "
     << fmt("%.2f", std::abs(tv[Technique::Ours] - tv[Technique::TV])) << " vs 25% gap "
     << fmt("%.2f", 0.25 * gap) << "; attacks " << fmt("%.0fs", d.attack_seconds);
  return {enough && margin && close && d.attack_seconds <= 1800, os.str()};
}

std::map<Technique, std::optional<double>> rates(
    const GridData& d,
    std::optional<double> (*f)(std::span<const RunEvaluation>, EvalMode), EvalMode mode) {
  std::map<Technique, std::optional<double>> out;
  for (auto t : kTechniques) out[t] = f(of_technique(d, t), mode);
  return out;
}

Outcome criterion5a(const GridData& d) {
  const auto r = rates(d, &digital_asr, EvalMode::WhiteBox);
  const bool ok = r.at(Technique::Ours) && r.at(Technique::TV) &&
                  *r.at(Technique::Ours) >= *r.at(Technique::TV);
  return {ok, "digital white-box ASR Ours " + opt(r.at(Technique::Ours)) + " vs TV " +
                  opt(r.at(Technique::TV))};
}

Outcome criterion5b(const GridData& d) {
  std::vector<RunEvaluation> combo, patch;
  for (const auto& e : d.evals)
    (technique_layout(e.key.technique) == Layout::PatchNoiseCombo ? combo : patch).push_back(e);
  const auto c = digital_asr(combo, EvalMode::WhiteBox);
  const auto p = digital_asr(patch, EvalMode::WhiteBox);
  return {c && p && *c > *p, "digital white-box ASR combo " + opt(c) + " vs patch-only " + opt(p)};
}

Outcome criterion5c(const GridData& d) {
  bool ok = true;
  std::string detail;
  for (auto mode : {EvalMode::WhiteBox, EvalMode::BlackBox}) {
    const auto r = rates(d, &physical_asr, mode);
    const auto best = r.at(Technique::ComboOurs);
    detail += mode == EvalMode::WhiteBox ? "physical WB" : "; physical BB";
    for (auto t : kTechniques) {
      detail += std::string(" ") + technique_label(t) + "=" + opt(r.at(t));
      if (t != Technique::ComboOurs) ok = ok && best && r.at(t) && *best >= *r.at(t);
    }
  }
  return {ok, detail};
}

Outcome criterion5d(const GridData& d, double total_seconds) {
  bool ok = true;
  std::string detail;
  for (auto a : {Algorithm::PGD, Algorithm::IFGSM, Algorithm::CW, Algorithm::LOTS}) {
    double low = 1.0, high = 0.0;
    bool defined = true;
    for (auto t : kTechniques) {
      const auto v = d.report.transferability.at(t).at(a);
      if (!v) {
        defined = false;
        continue;
      }
      if (t == Technique::ComboTV || t == Technique::ComboOurs)
        low = std::min(low, *v);
      else
        high = std::max(high, *v);
    }
    ok = ok && defined && low > high;
    detail += std::string(to_string(a)) + " min(S3,S4) " + fmt("%.3f", low) + " > max(S0-S2) " +
              fmt("%.3f", high) + "; ";
  }
  ok = ok && total_seconds <= 7200;
  return {ok, detail + "grid total " + fmt("%.0fs", total_seconds)};
}

Outcome criterion9(const GridData& d) {
  const auto violations = blackbox_hygiene_violations(d.runs, d.stack.roles);
  std::size_t audited = 0;
  bool subset = true;
  for (const auto& r : d.runs) {
    if (r.key.blackbox == BlackBox::None) continue;
    ++audited;
    for (const auto& q : r.queried_models)
      subset = subset && std::find(r.generation_models.begin(), r.generation_models.end(), q) !=
                             r.generation_models.end();
  }
  return {violations.empty() && subset && audited > 0,
          std::to_string(audited) + " black-box-mode runs audited, " +
              std::to_string(violations.size()) + " held-out queries"};
}

// ---- 6: epsilon sweep ------------------------------------------------------------

Outcome criterion6(const Settings& s) {
  const auto t0 = Clock::now();
  const ToyStack stack = make_toy_stack(s.size, 1);
  SweepSettings ss;
  ss.master_seed = 6;
  ss.workers = s.workers;
  const auto pairs = make_face_pairs(s.pairs, 7, s.size);
  const auto points = epsilon_sweep(ss, pairs, stack.roles.primary,
                                    threshold_for(stack.thresholds, "A"),
                                    make_capture_grid(capture_spec(s)));
  std::ofstream(fs::path(s.out) / "sweep.csv") << sweep_csv(points);
  int inversions = 0;
  bool within_se = true, defined = true, linf_ok = true;
  std::string detail = "ASR";
  for (std::size_t k = 0; k < points.size(); ++k) {
    const auto& p = points[k];
    detail += " " + fmt("%g", p.epsilon) + ":" + opt(p.mean_physical_asr);
    if (!p.mean_physical_asr) {
      defined = false;
      continue;
    }
    linf_ok = linf_ok && std::abs(p.linf - p.linf_bound) <= 1.0 / 255;
    if (k > 0 && points[k - 1].mean_physical_asr &&
        *p.mean_physical_asr < *points[k - 1].mean_physical_asr) {
      ++inversions;
      const double se = std::max(p.standard_error.value_or(0.0),
                                 points[k - 1].standard_error.value_or(0.0));
      within_se = within_se && *points[k - 1].mean_physical_asr - *p.mean_physical_asr <= se;
    }
  }
  detail += "; L∞ vs bound";
  for (const auto& p : points) detail += " " + fmt("%.3f", p.linf) + "/" + fmt("%.3f", p.linf_bound);
  const double secs = seconds_since(t0);
  detail += "; inversions " + std::to_string(inversions) + "; " + fmt("%.0fs", secs);
  return {defined && linf_ok && inversions <= 1 && within_se && secs <= 1200, detail};
}

// ---- 7: constraint audit -----------------------------------------------------------

Outcome criterion7(const Settings& s) {
  const auto t0 = Clock::now();
  const ToyStack stack = make_toy_stack(s.size, 1);
  const auto pairs = make_face_pairs(s.smoke_pairs, 8, s.size);
  GridSettings gs;
  gs.iterations = s.iterations;
  gs.cw_iterations = s.cw_iterations;
  gs.master_seed = 9;
  struct Task {
    CellKey key;
    int pair;
  };
  std::vector<Task> tasks;
  for (const auto& k : full_grid())
    for (int p = 0; p < s.smoke_pairs; ++p) tasks.push_back({k, p});
  std::vector<std::string> problems(tasks.size());
  std::vector<std::size_t> iterates(tasks.size(), 0);
  parallel_for(tasks.size(), s.workers, [&](std::size_t t) {
    const auto& [key, p] = tasks[t];
    const AttackConfig cfg = cell_config(gs, key, p);
    const AttackMasks masks = make_masks(cfg.layout, stack.patch);
    const BinaryMask fixed = masks.trainable().complement();
    const ImageTensor& xs = pairs[p].source;
    std::string& problem = problems[t];
    auto observer = [&](int it, const ImageTensor& x) {
      ++iterates[t];
      if (!problem.empty()) return;
      for (double v : x.data()) {
        if (!(v >= 0.0 && v <= 1.0)) problem = "pixel outside [0,1]";
        if (key.algorithm == Algorithm::CW && !(v > 0.0 && v < 1.0)) problem = "CW hit the box";
      }
      if (max_abs_diff(x, xs, masks.noise) > cfg.epsilon_small + 1e-12) problem = "eps_s exceeded";
      if (max_abs_diff(x, xs, fixed) != 0.0) problem = "non-trainable pixel changed";
      if (!problem.empty()) problem += " at iterate " + std::to_string(it);
    };
    const CellRun run = run_cell(gs, key, p, pairs[p], stack.patch, stack.roles, observer);
    if (!run.error.empty()) problem = run.error;
    if (key.algorithm == Algorithm::CW && run.result.box_clips != 0) problem = "CW clipped";
  });
  std::size_t failures = 0, total = 0;
  std::string first;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    total += iterates[t];
    if (!problems[t].empty()) {
      ++failures;
      if (first.empty()) first = tasks[t].key.str() + ": " + problems[t];
    }
  }
  const double secs = seconds_since(t0);
  return {failures == 0 && secs <= 1800,
          std::to_string(tasks.size()) + " runs, " + std::to_string(total) + " iterates, " +
              std::to_string(failures) + " violations" + (first.empty() ? "" : " (" + first + ")") +
              "; " + fmt("%.0fs", secs)};
}

// ---- 8: determinism ---------------------------------------------------------------

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    out[fs::relative(e.path(), root).string()] = ss.str();
  }
  return out;
}

Outcome criterion8(const Settings& s) {
  const fs::path root = fs::path(s.out) / "determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path config = root / "config.json";
  std::ofstream(config) << R"({"stack": {"size": 32, "calibration_identities": 10},
    "pairs": {"count": 3}, "grid": {"iterations": 30, "cw_iterations": 60, "master_seed": 5},
    "evaluation": {"physical_pairs": 2}, "sweep": {"epsilons": [0.05, 0.25], "successes_per_epsilon": 1}})";
  std::ostringstream sink;
  int status = 0;
  auto run = [&](std::vector<std::string> args) { status |= run_cli(args, sink, sink); };
  const std::vector<std::string> subset{"--techniques", "Ours,Combo+Ours", "--blackbox",
                                        "None,DI+Ensemble"};
  for (const auto& [dir, j] : std::vector<std::pair<std::string, std::string>>{
           {"serial_a", "1"}, {"serial_b", "1"}, {"parallel", "4"}}) {
    std::vector<std::string> args{"grid", "-c", config.string(), "-o", (root / dir).string(),
                                  "-j", j};
    args.insert(args.end(), subset.begin(), subset.end());
    run(args);
    run({"simulate", "-c", config.string(), "--image",
         (root / dir / "cells/PGD_None_Ours/adversarial/pair_000.png").string(), "-o",
         (root / (dir + "_captures")).string()});
    run({"sweep", "-c", config.string(), "-o", (root / (dir + "_sweep")).string(), "-j", j});
  }
  std::size_t files = 0;
  bool same = status == 0;
  for (const char* suffix : {"", "_captures", "_sweep"}) {
    const auto a = tree(root / (std::string("serial_a") + suffix));
    const auto b = tree(root / (std::string("serial_b") + suffix));
    const auto c = tree(root / (std::string("parallel") + suffix));
    same = same && !a.empty() && a == b && a == c;
    files += a.size();
  }
  return {same, std::to_string(files) + " artifacts (images, records, captures, reports, sweep) " +
                    (same ? "bit-identical" : "DIFFER") + " across 2 serial runs and a 4-worker run"};
}

// ---- 10: CW inverse -------------------------------------------------------------------

Outcome criterion10() {
  Rng rng(1010);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const double x = rng.uniform(0.01, 0.99);
    worst = std::max(worst, std::abs(cw_to_pixel(cw_from_pixel(x)) - x));
  }
  return {worst <= 1e-10, "1000 draws, max |x - x'| " + fmt("%.2e", worst)};
}

}  // namespace

int main(int argc, char** argv) {
  Settings s;
  CLI::App app{"Acceptance criteria"};
  app.add_option("--size", s.size, "face crop size");
  app.add_option("--pairs", s.pairs, "pairs per cell");
  app.add_option("--physical-pairs", s.physical_pairs, "pairs per cell with capture simulation");
  app.add_option("--iterations", s.iterations);
  app.add_option("--cw-iterations", s.cw_iterations);
  app.add_option("--smoke-pairs", s.smoke_pairs);
  app.add_option("--blur", s.blur, "capture blur sigma");
  app.add_option("--print-blur", s.print_blur, "print blur sigma");
  app.add_option("-j,--workers", s.workers, "0 = all cores");
  app.add_option("-o,--out", s.out, "artifact directory");
  CLI11_PARSE(app, argc, argv);
  if (s.workers <= 0) s.workers = default_workers();
  fs::create_directories(s.out);

  int failed = 0;
  auto report = [&](const char* id, const char* title, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS " : "FAIL ") << id << " " << title << ": " << o.detail
              << std::endl;
  };

  report("1", "gradient oracles", criterion1);
  report("2", "masked loss with zero thresholds equals TV", criterion2);
  report("3", "sub-threshold deviations give zero loss and gradient", criterion3);
  report("10", "CW inverse", criterion10);
  report("8", "determinism", [&] { return criterion8(s); });
  report("7", "constraint audit", [&] { return criterion7(s); });
  report("6", "epsilon sweep", [&] { return criterion6(s); });

  const auto t0 = Clock::now();
  GridData grid;
  std::string grid_error;
  try {
    grid = run_full_grid(s);
  } catch (const std::exception& e) {
    grid_error = e.what();
  }
  const double grid_seconds = seconds_since(t0);
  auto on_grid = [&](const char* id, const char* title, const std::function<Outcome()>& fn) {
    if (!grid_error.empty())
      report(id, title, [&] { return Outcome{false, "grid failed: " + grid_error}; });
    else
      report(id, title, fn);
  };
  on_grid("4", "patch TV ordering", [&] { return criterion4(grid); });
  on_grid("5a", "masked >= TV digital white-box ASR", [&] { return criterion5a(grid); });
  on_grid("5b", "combo > patch-only digital white-box ASR", [&] { return criterion5b(grid); });
  on_grid("5c", "combo+ours leads physical ASR", [&] { return criterion5c(grid); });
  on_grid("5d", "S3,S4 > S0,S1,S2 physical transferability",
          [&] { return criterion5d(grid, grid_seconds); });
  on_grid("9", "black-box hygiene", [&] { return criterion9(grid); });

  std::cout << (failed == 0 ? "ALL CRITERIA PASS" : std::to_string(failed) + " CRITERIA FAIL")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
