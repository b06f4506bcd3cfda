#include "advface/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "advface/config.hpp"
#include "advface/errors.hpp"
#include "advface/faces.hpp"
#include "advface/image_io.hpp"
#include "advface/parallel.hpp"
#include "advface/toystack.hpp"

namespace advface {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Missing or unusable inputs named on the command line.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw UsageError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out << text;
    if (!out) throw IoError("write failed: " + p.string());
  }
  fs::rename(tmp, p);
}

void write_png(const ImageTensor& img, const fs::path& p) {
  fs::create_directories(p.parent_path());
  save_image(img, p);
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

fs::path resolve_out(const std::string& flag, const char* command) {
  if (!flag.empty()) return flag;
  if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0')
    return fs::path(root) / command;
  return fs::path("advface-out") / command;
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) return;
  if (!fs::exists(path) || fs::is_directory(path)) throw UsageError(std::string(what) + " not found: " + path);
}

RunConfig config_or_default(const std::string& path) {
  RunConfig cfg = path.empty() ? RunConfig{} : load_run_config(path);
  validate(cfg);
  return cfg;
}

int workers_or_default(int w) { return w > 0 ? w : default_workers(); }

std::string cell_dirname(const CellKey& k) {
  std::string s = k.str();
  for (char& c : s) {
    if (c == '/') c = '_';
    if (c == '+') c = '-';
  }
  return s;
}

std::vector<FacePair> load_pairs(const std::string& list, const RunConfig& cfg) {
  if (list.empty()) return make_face_pairs(cfg.pairs.count, cfg.pairs.seed, cfg.stack.size);
  require_file(list, "pairs list");
  const fs::path base = fs::path(list).parent_path();
  std::istringstream in(read_text(list));
  std::vector<FacePair> pairs;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string src, tgt;
    if (!(ls >> src) || src[0] == '#') continue;
    if (!(ls >> tgt)) throw UsageError("pairs list: line without target: " + line);
    const fs::path s = base / src, t = base / tgt;
    pairs.push_back({s.stem().string(), t.stem().string(), load_image(s), load_image(t)});
  }
  if (pairs.empty()) throw UsageError("pairs list is empty: " + list);
  return pairs;
}

void apply_thresholds(RunConfig& cfg, const std::string& path) {
  if (path.empty()) return;
  require_file(path, "threshold file");
  cfg.grid.base.thresholds = load_thresholds(path);
  cfg.sweep.base.thresholds = cfg.grid.base.thresholds;
}

BinaryMask patch_or_default(const std::string& path, const ToyStack& stack) {
  if (path.empty()) return stack.patch;
  require_file(path, "patch mask");
  return load_mask(path);
}

ToyStack build_stack(const RunConfig& cfg) {
  return make_toy_stack(cfg.stack.size, cfg.stack.seed, cfg.stack.metric,
                        cfg.stack.calibration_identities);
}

template <typename T>
std::vector<T> parse_list(const std::vector<std::string>& names, T (*from)(const std::string&),
                          std::vector<T> all) {
  if (names.empty()) return all;
  std::vector<T> out;
  for (const auto& n : names) {
    try {
      out.push_back(from(n));
    } catch (const ContractViolation& e) {
      throw UsageError(e.what());
    }
  }
  return out;
}

std::vector<CellKey> filtered_cells(const std::vector<std::string>& algs,
                                    const std::vector<std::string>& bbs,
                                    const std::vector<std::string>& techs) {
  const auto a = parse_list<Algorithm>(algs, &algorithm_from_string, {});
  const auto b = parse_list<BlackBox>(bbs, &blackbox_from_string, {});
  const auto t = parse_list<Technique>(techs, &technique_from_string, {});
  auto keep = [](const auto& filter, auto v) {
    return filter.empty() || std::find(filter.begin(), filter.end(), v) != filter.end();
  };
  std::vector<CellKey> out;
  for (const auto& k : full_grid())
    if (keep(a, k.algorithm) && keep(b, k.blackbox) && keep(t, k.technique)) out.push_back(k);
  if (out.empty()) throw UsageError("cell filter selects no cells");
  return out;
}

std::string trace_csv(const AttackResult& r) {
  std::ostringstream os;
  os << "iteration,loss,distance\n";
  char buf[96];
  for (std::size_t t = 0; t < r.loss_trace.size(); ++t) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", t, r.loss_trace[t], r.distance_trace[t]);
    os << buf;
  }
  return os.str();
}

bool finite_trace(const AttackResult& r) {
  for (double v : r.loss_trace)
    if (!std::isfinite(v)) return false;
  return true;
}

// ---- report regeneration ----------------------------------------------------

struct ReportOutcome {
  std::size_t records = 0;
  std::vector<std::string> corrupt;
};

ReportOutcome write_report(const fs::path& results, const fs::path& out_dir) {
  std::vector<CellKey> cells = full_grid();
  const fs::path manifest = results / "manifest.json";
  if (fs::exists(manifest)) {
    try {
      const json m = json::parse(read_text(manifest));
      cells.clear();
      for (const auto& s : m.at("cells")) cells.push_back(CellKey::parse(s.get<std::string>()));
    } catch (const json::exception& e) {
      throw CorruptDataError("manifest " + manifest.string() + ": " + e.what());
    }
  }
  ReportOutcome outcome;
  std::vector<RunEvaluation> evals;
  for (const auto& key : cells) {
    const fs::path dir = results / "cells" / cell_dirname(key);
    if (!fs::exists(dir / "DONE") || !fs::exists(dir / "records.jsonl")) continue;
    std::istringstream in(read_text(dir / "records.jsonl"));
    std::string line;
    for (int n = 1; std::getline(in, line); ++n) {
      if (line.empty()) continue;
      try {
        RunEvaluation e = run_evaluation_from_json(line);
        if (e.key != key) throw CorruptDataError("record belongs to cell " + e.key.str());
        evals.push_back(std::move(e));
        ++outcome.records;
      } catch (const std::exception& e) {
        outcome.corrupt.push_back((dir / "records.jsonl").string() + ":" + std::to_string(n) +
                                  ": " + e.what());
      }
    }
  }
  if (outcome.records == 0) return outcome;
  const AblationReport rep = build_report(evals, cells);
  write_text(out_dir / "report.csv", report_csv(rep));
  write_text(out_dir / "report.json", report_json(rep));
  write_text(out_dir / "transferability.csv", transferability_csv(rep));
  for (bool physical : {false, true})
    for (EvalMode mode : {EvalMode::WhiteBox, EvalMode::BlackBox})
      write_text(out_dir / (std::string("asr_") + (physical ? "physical" : "digital") + "_" +
                            (mode == EvalMode::WhiteBox ? "whitebox" : "blackbox") + ".csv"),
                 asr_bars_csv(rep, physical, mode));
  return outcome;
}

// ---- commands ---------------------------------------------------------------

struct Common {
  std::string config;
  std::string out;
  int workers = 0;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config, "JSON run configuration");
  app->add_option("-o,--out", c.out, "output directory");
  app->add_option("-j,--workers", c.workers, "worker threads (0 = all cores)");
  app->add_option("--seed", c.seed, "master seed override");
  app->add_flag("-v,--verbose", c.verbose, "progress messages on stderr");
}

RunConfig load_common(const Common& c) {
  require_file(c.config, "config file");
  RunConfig cfg = config_or_default(c.config);
  if (c.seed) {
    cfg.grid.master_seed = *c.seed;
    cfg.sweep.master_seed = *c.seed;
  }
  cfg.grid.workers = workers_or_default(c.workers);
  cfg.sweep.workers = cfg.grid.workers;
  return cfg;
}

json manifest_json(const RunConfig& cfg, const Common& c, const fs::path& out,
                   const std::string& command) {
  json m;
  m["tool_version"] = kToolVersion;
  m["command"] = command;
  m["master_seed"] = cfg.grid.master_seed;
  m["config_path"] = c.config;
  m["config"] = json::parse(to_json(cfg));
  m["config"]["grid"].erase("workers");
  m["output_dir"] = out.string();
  m["timestamp"] = utc_timestamp();
  return m;
}

struct AttackArgs {
  Common common;
  std::string source, target, patch_mask, thresholds;
};

int cmd_attack(const AttackArgs& a, std::ostream& out, std::ostream& err) {
  require_file(a.source, "source image");
  require_file(a.target, "target image");
  RunConfig cfg = load_common(a.common);
  apply_thresholds(cfg, a.thresholds);
  const fs::path dir = resolve_out(a.common.out, "attack");
  const ToyStack stack = build_stack(cfg);
  const ImageTensor xs = load_image(a.source);
  const ImageTensor xt = load_image(a.target);
  const BinaryMask patch = patch_or_default(a.patch_mask, stack);
  AttackConfig ac = cfg.grid.base;
  if (a.common.seed) ac.seed = *a.common.seed;
  ac.validate();
  const EnsembleSpec models = stack.roles.generation_models(ac.blackbox);
  QueryAudit audit;
  AttackContext ctx;
  ctx.audit = &audit;
  if (a.common.verbose) err << "attack: " << to_string(ac.algorithm) << " x" << ac.iterations << "\n";
  const AttackResult r = run_attack(xs, xt, make_masks(ac.layout, patch), ac, models, ctx);

  json meta = manifest_json(cfg, a.common, dir, "attack");
  meta["source"] = a.source;
  meta["target"] = a.target;
  meta["patch_mask"] = a.patch_mask;
  meta["seed"] = ac.seed;
  meta["status"] = finite_trace(r) ? "ok" : "diverged";
  meta["iterations_run"] = r.iterations_run;
  meta["best_iteration"] = r.best_iteration;
  meta["best_loss"] = r.best_loss;
  meta["box_clips"] = r.box_clips;
  meta["generation_models"] = models.member_names();
  const auto queried = audit.queried();
  meta["queried_models"] = std::vector<std::string>(queried.begin(), queried.end());
  json matches = json::object();
  for (const auto& m : stack.all_models()) {
    double score = 0.0;
    const bool ok = digital_match(*m, r.adversarial, xt, stack.thresholds, &score);
    matches[m->name()] = {{"score", score}, {"match", ok}};
  }
  meta["digital"] = matches;
  write_png(r.adversarial, dir / "adversarial.png");
  write_text(dir / "loss_trace.csv", trace_csv(r));
  write_text(dir / "manifest.json", manifest_json(cfg, a.common, dir, "attack").dump(2));
  meta.erase("timestamp");
  meta.erase("output_dir");
  write_text(dir / "metadata.json", meta.dump(2));
  out << "wrote " << (dir / "adversarial.png").string() << " (status " << meta["status"].get<std::string>()
      << ", primary match " << (matches[stack.roles.primary->name()]["match"].get<bool>() ? "yes" : "no")
      << ")\n";
  return kExitOk;
}

struct GridArgs {
  Common common;
  std::string pairs, patch_mask, thresholds;
  std::vector<std::string> algorithms, blackbox, techniques;
  bool save_images = true;
};

int cmd_grid(const GridArgs& g, std::ostream& out, std::ostream& err) {
  RunConfig cfg = load_common(g.common);
  apply_thresholds(cfg, g.thresholds);
  const std::vector<CellKey> cells = filtered_cells(g.algorithms, g.blackbox, g.techniques);
  const fs::path dir = resolve_out(g.common.out, "grid");
  const ToyStack stack = build_stack(cfg);
  const std::vector<FacePair> pairs = load_pairs(g.pairs, cfg);
  const BinaryMask patch = patch_or_default(g.patch_mask, stack);
  const CaptureGrid capture = make_capture_grid(cfg.capture);

  json manifest = manifest_json(cfg, g.common, dir, "grid");
  manifest["pairs_path"] = g.pairs;
  manifest["patch_mask"] = g.patch_mask;
  manifest["thresholds_path"] = g.thresholds;
  for (const auto& p : pairs) manifest["pairs"].push_back({p.source_id, p.target_id});
  for (const auto& k : cells) manifest["cells"].push_back(k.str());
  const fs::path manifest_path = dir / "manifest.json";
  if (fs::exists(manifest_path)) {
    json old = json::parse(read_text(manifest_path));
    json a = old, b = manifest;
    a.erase("timestamp");
    b.erase("timestamp");
    if (a != b)
      throw ContractViolation("grid: " + manifest_path.string() +
                              " belongs to a different run; use a fresh output directory");
    manifest["timestamp"] = old["timestamp"];
  } else {
    write_text(manifest_path, manifest.dump(2));
  }

  std::vector<std::string> violations;
  int skipped = 0, failed_runs = 0;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const CellKey& key = cells[c];
    const fs::path cdir = dir / "cells" / cell_dirname(key);
    if (fs::exists(cdir / "DONE")) {
      ++skipped;
      continue;
    }
    if (g.common.verbose)
      err << "[" << c + 1 << "/" << cells.size() << "] " << key.str() << "\n";
    const std::vector<CellRun> runs = run_grid(pairs, {key}, patch, stack.roles, cfg.grid);
    const auto v = blackbox_hygiene_violations(runs, stack.roles);
    violations.insert(violations.end(), v.begin(), v.end());
    std::vector<RunEvaluation> evals(runs.size());
    parallel_for(runs.size(), cfg.grid.workers, [&](std::size_t k) {
      evals[k] = evaluate_run(runs[k], pairs[runs[k].pair_index], patch, stack.roles,
                              stack.thresholds, capture, cfg.evaluation);
    });
    std::string records;
    json queries = json::array();
    for (std::size_t k = 0; k < runs.size(); ++k) {
      records += json::parse(to_json(evals[k])).dump() + "\n";
      queries.push_back({{"pair", runs[k].pair_index},
                         {"seed", runs[k].seed},
                         {"generation_models", runs[k].generation_models},
                         {"queried_models", runs[k].queried_models},
                         {"error", runs[k].error}});
      if (!runs[k].error.empty()) {
        ++failed_runs;
        err << key.str() << " pair " << runs[k].pair_index << " failed: " << runs[k].error << "\n";
      } else if (g.save_images) {
        char name[32];
        std::snprintf(name, sizeof name, "pair_%03d.png", runs[k].pair_index);
        write_png(runs[k].result.adversarial, cdir / "adversarial" / name);
      }
    }
    write_text(cdir / "records.jsonl", records);
    write_text(cdir / "runs.json", queries.dump(2));
    write_text(cdir / "DONE", "");
  }
  const ReportOutcome rep = write_report(dir, dir / "report");
  out << "grid: " << cells.size() << " cells (" << skipped << " resumed), " << pairs.size()
      << " pairs, " << failed_runs << " failed runs, " << rep.records << " records\n";
  if (!violations.empty()) {
    for (const auto& v : violations) err << "hygiene violation: " << v << "\n";
    return kExitContract;
  }
  return kExitOk;
}

struct SweepArgs {
  Common common;
  std::string pairs, thresholds;
};

int cmd_sweep(const SweepArgs& s, std::ostream& out, std::ostream& err) {
  RunConfig cfg = load_common(s.common);
  apply_thresholds(cfg, s.thresholds);
  const fs::path dir = resolve_out(s.common.out, "sweep");
  const ToyStack stack = build_stack(cfg);
  const std::vector<FacePair> pairs = load_pairs(s.pairs, cfg);
  const CaptureGrid capture = make_capture_grid(cfg.capture);
  if (s.common.verbose) err << "sweep: " << cfg.sweep.epsilons.size() << " epsilons\n";
  const auto points =
      epsilon_sweep(cfg.sweep, pairs, stack.roles.primary,
                    threshold_for(stack.thresholds, stack.roles.primary->name()), capture);
  json manifest = manifest_json(cfg, s.common, dir, "sweep");
  manifest["pairs_path"] = s.pairs;
  write_text(dir / "manifest.json", manifest.dump(2));
  write_text(dir / "sweep.csv", sweep_csv(points));
  out << "sweep: " << points.size() << " points -> " << (dir / "sweep.csv").string() << "\n";
  return kExitOk;
}

struct ReportArgs {
  std::string results;
  std::string out;
};

int cmd_report(const ReportArgs& r, std::ostream& out, std::ostream& err) {
  if (!fs::is_directory(r.results)) throw UsageError("results directory not found: " + r.results);
  const fs::path dest = r.out.empty() ? fs::path(r.results) / "report" : fs::path(r.out);
  const ReportOutcome rep = write_report(r.results, dest);
  for (const auto& c : rep.corrupt) err << "corrupt record: " << c << "\n";
  if (rep.records == 0) {
    err << "report: no records in " << r.results << "\n";
    return kExitContract;
  }
  out << "report: " << rep.records << " records -> " << dest.string() << "\n";
  return rep.corrupt.empty() ? kExitOk : kExitContract;
}

struct SimulateArgs {
  Common common;
  std::string image, target;
};

int cmd_simulate(const SimulateArgs& s, std::ostream& out, std::ostream&) {
  require_file(s.image, "image");
  require_file(s.target, "target image");
  const RunConfig cfg = load_common(s.common);
  const fs::path dir = resolve_out(s.common.out, "simulate");
  const ImageTensor x = load_image(s.image);
  const CaptureGrid grid = make_capture_grid(cfg.capture);
  std::ostringstream table;
  table << "point,illuminance,color_temperature,yaw_degrees,seed,laplacian_energy\n";
  for (std::size_t k = 0; k < grid.points.size(); ++k) {
    const CaptureParams& p = grid.points[k];
    const ImageTensor captured = simulate_capture(simulate_print(x, p), p);
    const ImageTensor aligned = unwarp_yaw(captured, p.yaw_degrees);
    char name[48];
    std::snprintf(name, sizeof name, "capture_%02zu.png", k);
    write_png(captured, dir / name);
    std::snprintf(name, sizeof name, "aligned_%02zu.png", k);
    write_png(aligned, dir / name);
    char row[160];
    std::snprintf(row, sizeof row, "%zu,%.17g,%.17g,%.17g,%llu,%.17g\n", k, p.illuminance,
                  p.color_temperature, p.yaw_degrees, static_cast<unsigned long long>(p.seed),
                  laplacian_energy(aligned));
    table << row;
  }
  write_text(dir / "captures.csv", table.str());
  out << "simulate: " << grid.points.size() << " captures -> " << dir.string() << "\n";
  if (!s.target.empty()) {
    const ToyStack stack = build_stack(cfg);
    const auto& model = *stack.roles.primary;
    const PhysicalEval e = physical_asr(x, load_image(s.target), grid, model,
                                        threshold_for(stack.thresholds, model.name()),
                                        cfg.evaluation.physical);
    char line[128];
    std::snprintf(line, sizeof line, "physical ASR %.6f (%zu/%zu retained)\n", e.asr,
                  e.successes, e.retained);
    out << line;
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adversarial face patch toolkit", "advface"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  AttackArgs attack;
  auto* a = app.add_subcommand("attack", "generate one adversarial example");
  add_common(a, attack.common);
  a->add_option("--source", attack.source, "source face image")->required();
  a->add_option("--target", attack.target, "target face image")->required();
  a->add_option("--patch-mask", attack.patch_mask, "patch mask image (default eyeglasses)");
  a->add_option("--thresholds", attack.thresholds, "per-pixel activation thresholds");

  GridArgs grid;
  auto* g = app.add_subcommand("grid", "run the ablation grid, evaluate and report");
  add_common(g, grid.common);
  g->add_option("--pairs", grid.pairs, "pairs list: one 'source target' image pair per line");
  g->add_option("--patch-mask", grid.patch_mask, "patch mask image (default eyeglasses)");
  g->add_option("--thresholds", grid.thresholds, "per-pixel activation thresholds");
  g->add_option("--algorithms", grid.algorithms, "subset, e.g. PGD,CW")->delimiter(',');
  g->add_option("--blackbox", grid.blackbox, "subset, e.g. None,DI")->delimiter(',');
  g->add_option("--techniques", grid.techniques, "subset, e.g. TV,Ours")->delimiter(',');
  bool no_images = false;
  g->add_flag("--no-images", no_images, "skip writing adversarial images");

  SweepArgs sweep;
  auto* s = app.add_subcommand("sweep", "epsilon sweep of the full-face noise attack");
  add_common(s, sweep.common);
  s->add_option("--pairs", sweep.pairs, "pairs list: one 'source target' image pair per line");
  s->add_option("--thresholds", sweep.thresholds, "per-pixel activation thresholds");

  ReportArgs report;
  auto* r = app.add_subcommand("report", "regenerate reports from stored grid records");
  r->add_option("results", report.results, "grid output directory")->required();
  r->add_option("-o,--out", report.out, "report directory (default <results>/report)");

  SimulateArgs sim;
  auto* m = app.add_subcommand("simulate", "print-and-capture simulation of one image");
  add_common(m, sim.common);
  m->add_option("--image", sim.image, "image to print and capture")->required();
  m->add_option("--target", sim.target, "target image; also reports physical ASR");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }
  grid.save_images = !no_images;

  try {
    if (a->parsed()) return cmd_attack(attack, out, err);
    if (g->parsed()) return cmd_grid(grid, out, err);
    if (s->parsed()) return cmd_sweep(sweep, out, err);
    if (r->parsed()) return cmd_report(report, out, err);
    if (m->parsed()) return cmd_simulate(sim, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitContract;
  }
  return kExitUsage;
}

}  // namespace advface
