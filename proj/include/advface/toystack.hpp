#pragma once

#include <cstdint>
#include <vector>

#include "advface/attacks.hpp"
#include "advface/evalharness.hpp"

namespace advface {

// The default desk-scale setup: four random-weight extractors (A primary,
// {A, B} ensemble, C and D held out), synthetic faces and an eyeglass patch.
struct ToyStack {
  int size = 112;
  ModelRoles roles;
  ThresholdMap thresholds;
  BinaryMask patch;

  std::vector<ExtractorPtr> all_models() const;
};

ToyStack make_toy_stack(int size, std::uint64_t seed, Metric metric = Metric::L2,
                        int calibration_identities = 40);

// Source/target pairs of distinct identities; sources and targets are
// different captures (variation 1 and 2).
std::vector<FacePair> make_face_pairs(int n, std::uint64_t seed, int size = 112);

}  // namespace advface
