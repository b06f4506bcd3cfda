#include "advface/toystack.hpp"

#include <string>

#include "advface/errors.hpp"
#include "advface/faces.hpp"
#include "advface/random.hpp"

namespace advface {

std::vector<ExtractorPtr> ToyStack::all_models() const {
  std::vector<ExtractorPtr> out{roles.primary};
  for (const auto& m : roles.ensemble)
    if (m != roles.primary) out.push_back(m);
  out.insert(out.end(), roles.held_out.begin(), roles.held_out.end());
  return out;
}

ToyStack make_toy_stack(int size, std::uint64_t seed, Metric metric,
                        int calibration_identities) {
  require(size >= 16, "make_toy_stack: face size must be at least 16");
  auto model = [&](const char* name, Architecture a) {
    ExtractorSpec spec;
    spec.name = name;
    spec.architecture = a;
    spec.seed = derive_seed(seed, std::string("model-") + name);
    spec.input_height = size;
    spec.input_width = size;
    return std::make_shared<const FeatureExtractor>(spec);
  };
  ToyStack stack;
  stack.size = size;
  const auto a = model("A", Architecture::A);
  const auto b = model("B", Architecture::B);
  stack.roles.primary = a;
  stack.roles.ensemble = {a, b};
  stack.roles.held_out = {model("C", Architecture::C), model("D", Architecture::D)};
  stack.roles.validate();
  const CalibrationSet set =
      make_calibration_set(calibration_identities, derive_seed(seed, "calibration"), size);
  for (const auto& m : stack.all_models())
    stack.thresholds[m->name()] = calibrate_model(*m, set, metric);
  stack.patch = eyeglass_mask(size);
  return stack;
}

std::vector<FacePair> make_face_pairs(int n, std::uint64_t seed, int size) {
  require(n >= 1, "make_face_pairs: need at least one pair");
  std::vector<FacePair> pairs;
  for (int k = 0; k < n; ++k) {
    const std::uint64_t s = derive_seed(seed, "pair-source#" + std::to_string(k));
    const std::uint64_t t = derive_seed(seed, "pair-target#" + std::to_string(k));
    pairs.push_back({"id" + std::to_string(s % 100000), "id" + std::to_string(t % 100000),
                     render_face(make_identity(s), 1, size),
                     render_face(make_identity(t), 2, size)});
  }
  return pairs;
}

}  // namespace advface
