#include "advface/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "advface/errors.hpp"

namespace advface {

using json = nlohmann::json;

namespace {

class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
    for (const auto& [k, v] : j_.items()) unused_.insert(k);
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    unused_.erase(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + "." + key + ": wrong type");
    }
  }

  template <typename Fn>
  void parse(const char* key, Fn&& from_string) {
    std::string s;
    if (!j_.contains(key)) return;
    get(key, s);
    try {
      from_string(s);
    } catch (const ContractViolation& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  template <typename Fn>
  void section(const char* key, Fn&& fn) {
    if (!j_.contains(key)) return;
    unused_.erase(key);
    Reader r(j_.at(key), where_ + "." + key);
    fn(r);
    r.finish();
  }

  void finish() const {
    if (!unused_.empty()) throw ConfigError(where_ + ": unknown key '" + *unused_.begin() + "'");
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> unused_;
};

void read_attack(Reader& r, AttackConfig& a) {
  r.parse("algorithm", [&](const std::string& s) { a.algorithm = algorithm_from_string(s); });
  r.get("iterations", a.iterations);
  r.get("step_size", a.step_size);
  r.get("cw_step_size", a.cw_step_size);
  r.get("epsilon_patch", a.epsilon_patch);
  r.get("epsilon_small", a.epsilon_small);
  r.parse("layout", [&](const std::string& s) { a.layout = layout_from_string(s); });
  r.parse("smoothness",
          [&](const std::string& s) { a.smoothness = smoothness_kind_from_string(s); });
  r.get("gamma", a.gamma);
  r.get("tau", a.tau);
  r.parse("blackbox", [&](const std::string& s) { a.blackbox = blackbox_from_string(s); });
  r.get("crop_fraction", a.crop_fraction);
  r.get("init_sigma", a.init_sigma);
  r.get("seed", a.seed);
}

json write_attack(const AttackConfig& a) {
  return {{"algorithm", to_string(a.algorithm)},
          {"iterations", a.iterations},
          {"step_size", a.step_size},
          {"cw_step_size", a.cw_step_size},
          {"epsilon_patch", a.epsilon_patch},
          {"epsilon_small", a.epsilon_small},
          {"layout", to_string(a.layout)},
          {"smoothness", to_string(a.smoothness)},
          {"gamma", a.gamma},
          {"tau", a.tau},
          {"blackbox", to_string(a.blackbox)},
          {"crop_fraction", a.crop_fraction},
          {"init_sigma", a.init_sigma},
          {"seed", a.seed}};
}

void read_capture_params(Reader& r, CaptureParams& p) {
  r.get("illuminance", p.illuminance);
  r.get("color_temperature", p.color_temperature);
  r.get("yaw_degrees", p.yaw_degrees);
  r.get("blur_sigma", p.blur_sigma);
  r.get("sensor_noise_sigma", p.sensor_noise_sigma);
  r.get("print_levels", p.print_levels);
  r.get("dot_gain_gamma", p.dot_gain_gamma);
  r.get("print_blur_sigma", p.print_blur_sigma);
  r.get("seed", p.seed);
}

json write_capture_params(const CaptureParams& p) {
  return {{"illuminance", p.illuminance},
          {"color_temperature", p.color_temperature},
          {"yaw_degrees", p.yaw_degrees},
          {"blur_sigma", p.blur_sigma},
          {"sensor_noise_sigma", p.sensor_noise_sigma},
          {"print_levels", p.print_levels},
          {"dot_gain_gamma", p.dot_gain_gamma},
          {"print_blur_sigma", p.print_blur_sigma},
          {"seed", p.seed}};
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
}

}  // namespace

AttackConfig attack_config_from_json(const std::string& text) {
  const json j = parse_json(text);
  AttackConfig a;
  Reader r(j, "attack");
  read_attack(r, a);
  r.parse("metric", [&](const std::string& s) { a.metric = metric_from_string(s); });
  r.finish();
  return a;
}

CaptureParams capture_params_from_json(const std::string& text) {
  const json j = parse_json(text);
  CaptureParams p;
  Reader r(j, "capture");
  read_capture_params(r, p);
  r.finish();
  return p;
}

RunConfig run_config_from_json(const std::string& text) {
  const json j = parse_json(text);
  RunConfig cfg;
  Reader root(j, "config");
  root.section("stack", [&](Reader& r) {
    r.get("size", cfg.stack.size);
    r.get("seed", cfg.stack.seed);
    r.parse("metric", [&](const std::string& s) { cfg.stack.metric = metric_from_string(s); });
    r.get("calibration_identities", cfg.stack.calibration_identities);
  });
  root.section("pairs", [&](Reader& r) {
    r.get("count", cfg.pairs.count);
    r.get("seed", cfg.pairs.seed);
  });
  root.section("attack", [&](Reader& r) { read_attack(r, cfg.grid.base); });
  root.section("grid", [&](Reader& r) {
    r.get("iterations", cfg.grid.iterations);
    r.get("cw_iterations", cfg.grid.cw_iterations);
    r.get("master_seed", cfg.grid.master_seed);
    r.get("workers", cfg.grid.workers);
  });
  root.section("capture", [&](Reader& r) {
    r.get("illuminance", cfg.capture.illuminance);
    r.get("color_temperature", cfg.capture.color_temperature);
    r.get("n_angles", cfg.capture.n_angles);
    r.get("arc_degrees", cfg.capture.arc_degrees);
    r.get("seed", cfg.capture.seed);
    r.section("base", [&](Reader& b) { read_capture_params(b, cfg.capture.base); });
  });
  root.section("evaluation", [&](Reader& r) {
    r.get("physical_pairs", cfg.evaluation.physical_pairs);
    r.get("sharpness_floor", cfg.evaluation.physical.sharpness_floor);
  });
  root.section("sweep", [&](Reader& r) {
    r.get("epsilons", cfg.sweep.epsilons);
    r.get("successes_per_epsilon", cfg.sweep.successes_per_epsilon);
  });
  root.finish();
  cfg.grid.base.metric = cfg.stack.metric;
  cfg.sweep.base = cfg.grid.base;
  cfg.sweep.master_seed = cfg.grid.master_seed;
  cfg.sweep.workers = cfg.grid.workers;
  cfg.sweep.physical = cfg.evaluation.physical;
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return run_config_from_json(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string to_json(const RunConfig& cfg) {
  json j;
  j["stack"] = {{"size", cfg.stack.size},
                {"seed", cfg.stack.seed},
                {"metric", to_string(cfg.stack.metric)},
                {"calibration_identities", cfg.stack.calibration_identities}};
  j["pairs"] = {{"count", cfg.pairs.count}, {"seed", cfg.pairs.seed}};
  j["attack"] = write_attack(cfg.grid.base);
  j["grid"] = {{"iterations", cfg.grid.iterations},
               {"cw_iterations", cfg.grid.cw_iterations},
               {"master_seed", cfg.grid.master_seed},
               {"workers", cfg.grid.workers}};
  j["capture"] = {{"illuminance", cfg.capture.illuminance},
                  {"color_temperature", cfg.capture.color_temperature},
                  {"n_angles", cfg.capture.n_angles},
                  {"arc_degrees", cfg.capture.arc_degrees},
                  {"seed", cfg.capture.seed},
                  {"base", write_capture_params(cfg.capture.base)}};
  j["evaluation"] = {{"physical_pairs", cfg.evaluation.physical_pairs},
                     {"sharpness_floor", cfg.evaluation.physical.sharpness_floor}};
  j["sweep"] = {{"epsilons", cfg.sweep.epsilons},
                {"successes_per_epsilon", cfg.sweep.successes_per_epsilon}};
  return j.dump(2);
}

void validate(const RunConfig& cfg) {
  require(cfg.stack.size >= 16, "config: stack.size must be >= 16");
  require(cfg.stack.calibration_identities >= 2,
          "config: stack.calibration_identities must be >= 2");
  require(cfg.pairs.count >= 1, "config: pairs.count must be >= 1");
  require(cfg.grid.iterations >= 1 && cfg.grid.cw_iterations >= 1,
          "config: grid iterations must be >= 1");
  require(cfg.grid.workers >= 0, "config: grid.workers must be >= 0");
  require(cfg.evaluation.physical_pairs >= 0, "config: evaluation.physical_pairs must be >= 0");
  require(cfg.evaluation.physical.sharpness_floor >= 0.0,
          "config: evaluation.sharpness_floor must be >= 0");
  require(!cfg.sweep.epsilons.empty(), "config: sweep.epsilons must be non-empty");
  for (double e : cfg.sweep.epsilons)
    require(e >= 0.0 && e <= 1.0, "config: sweep epsilons must lie in [0, 1]");
  require(cfg.sweep.successes_per_epsilon >= 1,
          "config: sweep.successes_per_epsilon must be >= 1");
  cfg.grid.base.validate();
  cfg.capture.base.validate();
  make_capture_grid(cfg.capture);
}

}  // namespace advface
