#pragma once

#include <array>
#include <cstdint>

#include "advface/image.hpp"

namespace advface {

// Parametric identity for procedurally drawn, pre-aligned face crops.
struct FaceIdentity {
  std::uint64_t seed = 0;
  std::array<double, 3> skin{};
  std::array<double, 3> hair{};
  std::array<double, 3> background{};
  std::array<double, 3> iris{};
  std::array<double, 3> lips{};
  double face_rx = 0.0, face_ry = 0.0;  // fractions of the crop size
  double eye_dx = 0.0, eye_y = 0.0, eye_r = 0.0;
  double brow_tilt = 0.0;
  double mouth_w = 0.0, mouth_y = 0.0;
  double hairline = 0.0;
  double nose_len = 0.0;
};

FaceIdentity make_identity(std::uint64_t seed);

// Renders one capture of `id`. variation = 0 gives the canonical image; any
// other value adds a small deterministic shift, exposure change and noise.
ImageTensor render_face(const FaceIdentity& id, std::uint64_t variation, int size = 112);

// Eyeglass-frame region for an aligned crop of the given size: two lens rims
// around the canonical eye positions joined by a bridge.
BinaryMask eyeglass_mask(int size = 112);

}  // namespace advface
