#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <iostream>

#include "advface/cli.hpp"
#include "advface/config.hpp"
#include "advface/errors.hpp"
#include "advface/toystack.hpp"

namespace py = pybind11;
using namespace advface;

namespace {

using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using BoolArray = py::array_t<bool, py::array::c_style | py::array::forcecast>;

ImageTensor to_image(const F64Array& a) {
  if (a.ndim() != 3) throw ContractViolation("image must be a (C, H, W) array");
  const auto c = static_cast<int>(a.shape(0));
  const auto h = static_cast<int>(a.shape(1));
  const auto w = static_cast<int>(a.shape(2));
  return ImageTensor(h, w, c, std::vector<double>(a.data(), a.data() + a.size()));
}

F64Array from_image(const ImageTensor& x) {
  F64Array out({x.channels(), x.height(), x.width()});
  std::copy(x.data().begin(), x.data().end(), out.mutable_data());
  return out;
}

BinaryMask to_mask(const BoolArray& a) {
  if (a.ndim() != 2) throw ContractViolation("mask must be an (H, W) array");
  std::vector<unsigned char> data(a.data(), a.data() + a.size());
  return BinaryMask(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), std::move(data));
}

BoolArray from_mask(const BinaryMask& m) {
  BoolArray out({m.height(), m.width()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

std::string dict_json(const py::dict& d) {
  return py::module_::import("json").attr("dumps")(d).cast<std::string>();
}

SmoothnessSpec masked_spec(const ImageTensor& reference, const py::object& tau) {
  SmoothnessSpec spec;
  spec.kind = SmoothnessKind::Masked;
  spec.gamma = 1.0;
  spec.reference = reference;
  if (py::isinstance<py::float_>(tau) || py::isinstance<py::int_>(tau)) {
    spec.thresholds = ThresholdMatrix(reference.height(), reference.width(), tau.cast<double>());
  } else {
    const F64Array z = tau.cast<F64Array>();
    if (z.ndim() != 2) throw ContractViolation("tau must be a scalar or an (H, W) array");
    spec.thresholds = ThresholdMatrix(static_cast<int>(z.shape(0)), static_cast<int>(z.shape(1)),
                                      std::vector<double>(z.data(), z.data() + z.size()));
  }
  return spec;
}

py::dict physical_dict(const PhysicalEval& e) {
  py::dict d;
  d["asr"] = e.asr;
  d["retained"] = e.retained;
  d["successes"] = e.successes;
  d["scores"] = e.scores;
  return d;
}

}  // namespace

PYBIND11_MODULE(_advface, m) {
  m.doc() = "Adversarial face patch toolkit";

  py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DegenerateGridError>(m, "DegenerateGridError", PyExc_RuntimeError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("tv_loss", [](const F64Array& r, const BoolArray& region) {
    return tv_loss(to_image(r), to_mask(region));
  }, py::arg("image"), py::arg("region"));
  m.def("tv_loss_grad", [](const F64Array& r, const BoolArray& region) {
    return from_image(tv_loss_grad(to_image(r), to_mask(region)));
  }, py::arg("image"), py::arg("region"));
  m.def("masked_smoothness", [](const F64Array& cur, const F64Array& ref, const py::object& tau,
                                const BoolArray& region) {
    return masked_smoothness(to_image(cur), masked_spec(to_image(ref), tau), to_mask(region));
  }, py::arg("current"), py::arg("reference"), py::arg("tau"), py::arg("region"));
  m.def("masked_smoothness_grad", [](const F64Array& cur, const F64Array& ref,
                                     const py::object& tau, const BoolArray& region) {
    return from_image(
        masked_smoothness_grad(to_image(cur), masked_spec(to_image(ref), tau), to_mask(region)));
  }, py::arg("current"), py::arg("reference"), py::arg("tau"), py::arg("region"));
  m.def("compose_combo", [](const F64Array& xs, const F64Array& dp, const F64Array& ds,
                            const BoolArray& mp, const BoolArray& ms) {
    return from_image(compose_combo(to_image(xs), to_image(dp), to_image(ds), to_mask(mp),
                                    to_mask(ms)));
  }, py::arg("source"), py::arg("delta_patch"), py::arg("delta_noise"), py::arg("patch_mask"),
     py::arg("noise_mask"));

  py::class_<FeatureExtractor, std::shared_ptr<FeatureExtractor>>(m, "FeatureExtractor")
      .def(py::init([](const std::string& name, const std::string& arch, std::uint64_t seed,
                       int height, int width, int embed_dim) {
             ExtractorSpec s;
             s.name = name;
             s.architecture = architecture_from_string(arch);
             s.seed = seed;
             s.input_height = height;
             s.input_width = width;
             s.embed_dim = embed_dim;
             return std::make_shared<FeatureExtractor>(s);
           }),
           py::arg("name"), py::arg("architecture") = "A", py::arg("seed") = 0,
           py::arg("height") = 112, py::arg("width") = 112, py::arg("embed_dim") = 128)
      .def_property_readonly("name", &FeatureExtractor::name)
      .def_property_readonly("embed_dim", &FeatureExtractor::embed_dim)
      .def("embed", [](const FeatureExtractor& f, const F64Array& x) { return f.embed(to_image(x)); })
      .def("embed_input_grad", [](const FeatureExtractor& f, const F64Array& x,
                                  const Embedding& upstream) {
        return from_image(f.embed_input_grad(to_image(x), upstream));
      });

  m.def("feature_distance", [](const Embedding& a, const Embedding& b, const std::string& metric) {
    return feature_distance(a, b, metric_from_string(metric));
  }, py::arg("a"), py::arg("b"), py::arg("metric") = "l2");

  m.def("calibrate_threshold", [](const std::vector<double>& genuine,
                                  const std::vector<double>& impostor, const std::string& metric) {
    const auto t = calibrate_threshold(genuine, impostor, metric_from_string(metric));
    return py::make_tuple(t.value, t.f1);
  }, py::arg("genuine"), py::arg("impostor"), py::arg("metric") = "l2");

  m.def("attack", [](const F64Array& source, const F64Array& target, const BoolArray& patch,
                     const std::vector<std::shared_ptr<FeatureExtractor>>& models,
                     const py::dict& config) {
    const AttackConfig cfg = attack_config_from_json(dict_json(config));
    std::vector<ExtractorPtr> members(models.begin(), models.end());
    const EnsembleSpec ens = EnsembleSpec::uniform(members);
    QueryAudit audit;
    AttackContext ctx;
    ctx.audit = &audit;
    const ImageTensor xs = to_image(source), xt = to_image(target);
    const AttackMasks masks = make_masks(cfg.layout, to_mask(patch));
    AttackResult r;
    {
      py::gil_scoped_release release;
      r = run_attack(xs, xt, masks, cfg, ens, ctx);
    }
    py::dict d;
    d["adversarial"] = from_image(r.adversarial);
    d["loss_trace"] = r.loss_trace;
    d["distance_trace"] = r.distance_trace;
    d["best_iteration"] = r.best_iteration;
    d["best_loss"] = r.best_loss;
    d["box_clips"] = r.box_clips;
    const auto q = audit.queried();
    d["queried_models"] = std::vector<std::string>(q.begin(), q.end());
    return d;
  }, py::arg("source"), py::arg("target"), py::arg("patch_mask"), py::arg("models"),
     py::arg("config") = py::dict());

  m.def("simulate_print", [](const F64Array& x, const py::dict& params) {
    return from_image(simulate_print(to_image(x), capture_params_from_json(dict_json(params))));
  }, py::arg("image"), py::arg("params") = py::dict());
  m.def("simulate_capture", [](const F64Array& x, const py::dict& params) {
    return from_image(simulate_capture(to_image(x), capture_params_from_json(dict_json(params))));
  }, py::arg("image"), py::arg("params") = py::dict());
  m.def("neutral_capture_params", [] {
    const CaptureParams p = CaptureParams::neutral();
    py::dict d;
    d["illuminance"] = p.illuminance;
    d["color_temperature"] = p.color_temperature;
    d["yaw_degrees"] = p.yaw_degrees;
    d["blur_sigma"] = p.blur_sigma;
    d["sensor_noise_sigma"] = p.sensor_noise_sigma;
    d["print_levels"] = p.print_levels;
    d["dot_gain_gamma"] = p.dot_gain_gamma;
    d["print_blur_sigma"] = p.print_blur_sigma;
    return d;
  });
  m.def("white_balance_gains", &white_balance_gains, py::arg("kelvin"));
  m.def("physical_asr", [](const F64Array& x_adv, const F64Array& x_t,
                           const std::shared_ptr<FeatureExtractor>& model, double threshold,
                           const std::string& metric, const py::dict& base, std::uint64_t seed) {
    CaptureGridSpec spec;
    spec.base = capture_params_from_json(dict_json(base));
    spec.seed = seed;
    const VerificationThreshold t{metric_from_string(metric), threshold, model->name()};
    return physical_dict(
        physical_asr(to_image(x_adv), to_image(x_t), make_capture_grid(spec), *model, t));
  }, py::arg("adversarial"), py::arg("target"), py::arg("model"), py::arg("threshold"),
     py::arg("metric") = "l2", py::arg("capture") = py::dict(), py::arg("seed") = 0);

  m.def("toy_stack", [](int size, std::uint64_t seed, int calibration_identities) {
    const ToyStack s = make_toy_stack(size, seed, Metric::L2, calibration_identities);
    py::dict d;
    py::dict models, thresholds;
    for (const auto& mdl : s.all_models()) {
      models[py::str(mdl->name())] = std::const_pointer_cast<FeatureExtractor>(mdl);
      thresholds[py::str(mdl->name())] = s.thresholds.at(mdl->name()).value;
    }
    d["models"] = models;
    d["thresholds"] = thresholds;
    d["patch_mask"] = from_mask(s.patch);
    d["ensemble"] = s.roles.generation_models(BlackBox::Ensemble).member_names();
    std::vector<std::string> held;
    for (const auto& h : s.roles.held_out) held.push_back(h->name());
    d["held_out"] = held;
    return d;
  }, py::arg("size") = 112, py::arg("seed") = 1, py::arg("calibration_identities") = 40);
  m.def("face_pairs", [](int n, std::uint64_t seed, int size) {
    py::list out;
    for (const auto& p : make_face_pairs(n, seed, size))
      out.append(py::make_tuple(from_image(p.source), from_image(p.target)));
    return out;
  }, py::arg("n"), py::arg("seed") = 2, py::arg("size") = 112);
  m.def("full_grid", [] {
    std::vector<std::string> out;
    for (const auto& k : full_grid()) out.push_back(k.str());
    return out;
  });

  m.def("cli", [](const std::vector<std::string>& args) {
    py::gil_scoped_release release;
    return run_cli(args, std::cout, std::cerr);
  }, py::arg("args"));
}
