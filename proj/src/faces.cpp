#include "advface/faces.hpp"

#include <algorithm>
#include <cmath>

#include "advface/random.hpp"

namespace advface {

namespace {

constexpr double kEyeY = 0.42;
constexpr double kEyeDx = 0.19;

double smoothstep(double edge0, double edge1, double x) {
  const double t = std::clamp((x - edge0) / (edge1 - edge0), 0.0, 1.0);
  return t * t * (3 - 2 * t);
}

// Soft coverage of the ellipse ((x-cx)/rx)^2 + ((y-cy)/ry)^2 <= 1 with an
// antialiased rim about `soft` pixels wide.
double ellipse(double x, double y, double cx, double cy, double rx, double ry,
               double soft) {
  const double d = std::sqrt(((x - cx) / rx) * ((x - cx) / rx) +
                             ((y - cy) / ry) * ((y - cy) / ry));
  const double rim = soft / std::min(rx, ry);
  return 1.0 - smoothstep(1.0 - rim, 1.0 + rim, d);
}

void blend(std::array<double, 3>& px, const std::array<double, 3>& color, double a) {
  for (int c = 0; c < 3; ++c) px[c] = px[c] * (1 - a) + color[c] * a;
}

std::array<double, 3> jitter(Rng& rng, std::array<double, 3> base, double amount) {
  for (double& v : base) v = std::clamp(v + rng.uniform(-amount, amount), 0.02, 0.98);
  return base;
}

}  // namespace

FaceIdentity make_identity(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "face-identity"));
  FaceIdentity id;
  id.seed = seed;
  const double tone = rng.uniform(0.25, 0.9);
  id.skin = jitter(rng, {tone, tone * 0.78, tone * 0.64}, 0.05);
  const double hair_tone = rng.uniform(0.05, 0.7);
  id.hair = jitter(rng, {hair_tone, hair_tone * 0.8, hair_tone * 0.6}, 0.08);
  id.background = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
  id.iris = jitter(rng, {0.25, 0.3, 0.35}, 0.2);
  id.lips = jitter(rng, {0.7, 0.35, 0.35}, 0.12);
  id.face_rx = rng.uniform(0.28, 0.36);
  id.face_ry = rng.uniform(0.38, 0.46);
  id.eye_dx = kEyeDx + rng.uniform(-0.02, 0.02);
  id.eye_y = kEyeY + rng.uniform(-0.015, 0.015);
  id.eye_r = rng.uniform(0.045, 0.065);
  id.brow_tilt = rng.uniform(-0.03, 0.03);
  id.mouth_w = rng.uniform(0.1, 0.18);
  id.mouth_y = rng.uniform(0.72, 0.78);
  id.hairline = rng.uniform(0.16, 0.3);
  id.nose_len = rng.uniform(0.1, 0.17);
  return id;
}

ImageTensor render_face(const FaceIdentity& id, std::uint64_t variation, int size) {
  require(size >= 16, "render_face: size must be at least 16");
  Rng rng(derive_seed(id.seed ^ 0x5eedfaceULL, variation));
  double shift_x = 0.0, shift_y = 0.0, exposure = 1.0, noise = 0.0;
  if (variation != 0) {
    shift_x = rng.uniform(-0.015, 0.015);
    shift_y = rng.uniform(-0.015, 0.015);
    exposure = rng.uniform(0.93, 1.07);
    noise = 0.01;
  }
  const double S = size;
  const double soft = 0.8;
  ImageTensor img(size, size, 3);
  const double cx = 0.5 + shift_x;
  const double cy = 0.52 + shift_y;
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      const double x = (j + 0.5) / S;
      const double y = (i + 0.5) / S;
      const double X = x * S, Y = y * S;
      std::array<double, 3> px = id.background;
      // vertical background gradient
      for (double& v : px) v *= 0.85 + 0.3 * y;

      // hair cap behind the face
      blend(px, id.hair,
            ellipse(X, Y, cx * S, (cy - 0.08) * S, (id.face_rx + 0.05) * S,
                    (id.face_ry + 0.02) * S, soft) *
                (1.0 - smoothstep(id.hairline + 0.2, id.hairline + 0.3, y)));

      const double face_a = ellipse(X, Y, cx * S, cy * S, id.face_rx * S, id.face_ry * S, soft);
      auto skin = id.skin;
      const double shade = 1.0 - 0.25 * std::pow((x - cx) / id.face_rx, 2);
      for (double& v : skin) v *= shade;
      blend(px, skin, face_a);
      // fringe over the forehead
      blend(px, id.hair, face_a * (1.0 - smoothstep(id.hairline - 0.02, id.hairline + 0.02, y)));

      for (int side : {-1, 1}) {
        const double ex = cx + side * id.eye_dx;
        const double ey = id.eye_y + shift_y;
        blend(px, {0.95, 0.95, 0.93},
              ellipse(X, Y, ex * S, ey * S, id.eye_r * 1.5 * S, id.eye_r * 0.8 * S, soft));
        blend(px, id.iris, ellipse(X, Y, ex * S, ey * S, id.eye_r * 0.7 * S, id.eye_r * 0.7 * S, soft));
        blend(px, {0.03, 0.03, 0.03},
              ellipse(X, Y, ex * S, ey * S, id.eye_r * 0.3 * S, id.eye_r * 0.3 * S, soft));
        const double by = ey - id.eye_r * 1.9 + side * id.brow_tilt * (x - ex) / id.eye_dx;
        blend(px, id.hair,
              ellipse(X, Y, ex * S, by * S, id.eye_r * 1.7 * S, 0.012 * S, soft));
      }

      // nose shadow and mouth
      auto nose = id.skin;
      for (double& v : nose) v *= 0.8;
      blend(px, nose,
            ellipse(X, Y, cx * S, (id.eye_y + shift_y + 0.06 + id.nose_len / 2) * S, 0.02 * S,
                    id.nose_len / 2 * S, soft));
      blend(px, id.lips,
            ellipse(X, Y, cx * S, (id.mouth_y + shift_y) * S, id.mouth_w * S, 0.025 * S, soft));

      for (int c = 0; c < 3; ++c) {
        double v = px[c] * exposure;
        if (noise > 0.0) v += noise * rng.normal();
        img.at(c, i, j) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return img;
}

BinaryMask eyeglass_mask(int size) {
  require(size >= 16, "eyeglass_mask: size must be at least 16");
  BinaryMask mask(size, size, false);
  const double S = size;
  const double lens_rx = 0.13 * S, lens_ry = 0.09 * S;
  const double rim = std::max(2.0, 0.06 * S);
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      const double X = j + 0.5, Y = i + 0.5;
      bool on = false;
      for (int side : {-1, 1}) {
        const double ex = (0.5 + side * kEyeDx) * S;
        const double ey = kEyeY * S;
        const double outer = std::pow((X - ex) / lens_rx, 2) + std::pow((Y - ey) / lens_ry, 2);
        const double inner = std::pow((X - ex) / (lens_rx - rim), 2) +
                             std::pow((Y - ey) / (lens_ry - rim), 2);
        if (outer <= 1.0 && inner > 1.0) on = true;
      }
      // bridge between the lenses
      if (std::abs(Y - (kEyeY - 0.02) * S) <= rim / 2 &&
          std::abs(X - 0.5 * S) <= (kEyeDx * S - lens_rx + 1)) {
        on = true;
      }
      mask.set(i, j, on);
    }
  }
  return mask;
}

}  // namespace advface
