#include "advface/physim.hpp"

#include <algorithm>
#include <cmath>

#include "advface/evalharness.hpp"
#include "advface/random.hpp"

namespace advface {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kReferenceLux = 1200.0;
constexpr double kNeutralKelvin = 6500.0;
constexpr double kCameraDistance = 1.5;  // in image widths

double bilinear(const ImageTensor& x, int c, double yi, double xj, double fill) {
  const int H = x.height();
  const int W = x.width();
  if (yi < -0.5 || yi > H - 0.5 || xj < -0.5 || xj > W - 0.5) return fill;
  yi = std::clamp(yi, 0.0, static_cast<double>(H - 1));
  xj = std::clamp(xj, 0.0, static_cast<double>(W - 1));
  const int y0 = static_cast<int>(std::floor(yi));
  const int x0 = static_cast<int>(std::floor(xj));
  const int y1 = std::min(y0 + 1, H - 1);
  const int x1 = std::min(x0 + 1, W - 1);
  const double fy = yi - y0;
  const double fx = xj - x0;
  const double top = x.at(c, y0, x0) * (1 - fx) + x.at(c, y0, x1) * fx;
  const double bot = x.at(c, y1, x0) * (1 - fx) + x.at(c, y1, x1) * fx;
  return top * (1 - fy) + bot * fy;
}

// Plane coordinates are centred pixels: u = j - (W-1)/2, v = i - (H-1)/2.
struct YawGeometry {
  double cos_t, sin_t, dist, cu, cv;
  double zoom = 1.0;  // camera zoom-out that keeps the whole print in frame

  YawGeometry(const ImageTensor& x, double yaw_degrees)
      : cos_t(std::cos(yaw_degrees * kPi / 180.0)),
        sin_t(std::sin(yaw_degrees * kPi / 180.0)),
        dist(kCameraDistance * x.width()),
        cu((x.width() - 1) / 2.0),
        cv((x.height() - 1) / 2.0) {
    const double hu = cu + 0.5;
    const double hv = cv + 0.5;
    double reach_u = 0.0, reach_v = 0.0;
    for (double u : {-hu, hu}) {
      double up, vp;
      if (!project(u, hv, up, vp)) continue;
      reach_u = std::max(reach_u, std::abs(up));
      reach_v = std::max(reach_v, std::abs(vp));
    }
    zoom = std::min({1.0, hu / reach_u, hv / reach_v});
  }

  // Print-plane point -> camera image point. False if behind the camera.
  bool project(double u, double v, double& up, double& vp) const {
    const double depth = dist + u * sin_t;
    if (depth <= 0.0) return false;
    up = zoom * dist * u * cos_t / depth;
    vp = zoom * dist * v / depth;
    return true;
  }
  // Camera image point -> print-plane point. False if the ray misses the plane.
  bool back_project(double up, double vp, double& u, double& v) const {
    up /= zoom;
    vp /= zoom;
    const double denom = dist * cos_t - up * sin_t;
    if (denom <= 0.0) return false;
    u = up * dist / denom;
    v = vp * (dist + u * sin_t) / dist;
    return true;
  }
};

}  // namespace

void CaptureParams::validate() const {
  require(illuminance > 0.0 && std::isfinite(illuminance), "capture: illuminance must be > 0");
  require(color_temperature >= 1000.0 && color_temperature <= 12000.0,
          "capture: color temperature must be within [1000, 12000] K");
  require(print_levels >= 2, "capture: print_levels must be >= 2");
  require(blur_sigma >= 0.0 && print_blur_sigma >= 0.0, "capture: blur sigma must be >= 0");
  require(sensor_noise_sigma >= 0.0, "capture: sensor noise sigma must be >= 0");
  require(dot_gain_gamma > 0.0, "capture: dot gain gamma must be > 0");
}

CaptureParams CaptureParams::neutral() {
  CaptureParams p;
  p.illuminance = kReferenceLux;
  p.color_temperature = kNeutralKelvin;
  p.yaw_degrees = 0.0;
  p.blur_sigma = 0.0;
  p.sensor_noise_sigma = 0.0;
  p.print_levels = 256;
  p.dot_gain_gamma = 1.0;
  p.print_blur_sigma = 0.0;
  return p;
}

CaptureGrid make_capture_grid(const CaptureGridSpec& spec) {
  require(!spec.illuminance.empty() && !spec.color_temperature.empty(),
          "capture grid: illuminance and temperature lists must be non-empty");
  require(spec.n_angles >= 1, "capture grid: n_angles must be >= 1");
  CaptureGrid grid;
  std::uint64_t index = 0;
  for (double lux : spec.illuminance) {
    for (double kelvin : spec.color_temperature) {
      for (int a = 0; a < spec.n_angles; ++a) {
        CaptureParams p = spec.base;
        p.illuminance = lux;
        p.color_temperature = kelvin;
        p.yaw_degrees = spec.n_angles == 1
                            ? 0.0
                            : -spec.arc_degrees / 2 + spec.arc_degrees * a / (spec.n_angles - 1);
        p.seed = derive_seed(spec.seed, index++);
        p.validate();
        grid.points.push_back(p);
      }
    }
  }
  return grid;
}

std::array<double, 3> kelvin_to_rgb(double kelvin) {
  const double t = std::clamp(kelvin, 1000.0, 40000.0) / 100.0;
  double r, g, b;
  if (t <= 66.0) {
    r = 255.0;
    g = 99.4708025861 * std::log(t) - 161.1195681661;
  } else {
    r = 329.698727446 * std::pow(t - 60.0, -0.1332047592);
    g = 288.1221695283 * std::pow(t - 60.0, -0.0755148492);
  }
  if (t >= 66.0) {
    b = 255.0;
  } else if (t <= 19.0) {
    b = 0.0;
  } else {
    b = 138.5177312231 * std::log(t - 10.0) - 305.0447927307;
  }
  return {std::clamp(r / 255.0, 0.0, 1.0), std::clamp(g / 255.0, 0.0, 1.0),
          std::clamp(b / 255.0, 0.0, 1.0)};
}

std::array<double, 3> white_balance_gains(double kelvin) {
  const auto rgb = kelvin_to_rgb(kelvin);
  const auto ref = kelvin_to_rgb(kNeutralKelvin);
  return {rgb[0] / ref[0], rgb[1] / ref[1], rgb[2] / ref[2]};
}

ImageTensor gaussian_blur(const ImageTensor& x, double sigma) {
  require(sigma >= 0.0, "gaussian_blur: sigma must be >= 0");
  if (sigma == 0.0) return x;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
    total += kernel[k + radius];
  }
  for (double& v : kernel) v /= total;

  const int H = x.height();
  const int W = x.width();
  ImageTensor tmp(H, W, x.channels());
  ImageTensor out(H, W, x.channels());
  for (int c = 0; c < x.channels(); ++c) {
    for (int i = 0; i < H; ++i) {
      for (int j = 0; j < W; ++j) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          acc += kernel[k + radius] * x.at(c, i, std::clamp(j + k, 0, W - 1));
        }
        tmp.at(c, i, j) = acc;
      }
    }
    for (int i = 0; i < H; ++i) {
      for (int j = 0; j < W; ++j) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          acc += kernel[k + radius] * tmp.at(c, std::clamp(i + k, 0, H - 1), j);
        }
        out.at(c, i, j) = acc;
      }
    }
  }
  return out;
}

ImageTensor warp_yaw(const ImageTensor& x, double yaw_degrees, double fill) {
  require(std::abs(yaw_degrees) < 90.0, "warp_yaw: |yaw| must be below 90 degrees");
  if (yaw_degrees == 0.0) return x;
  const YawGeometry geo(x, yaw_degrees);
  ImageTensor out(x.height(), x.width(), x.channels(), fill);
  std::size_t visible = 0;
  for (int i = 0; i < x.height(); ++i) {
    for (int j = 0; j < x.width(); ++j) {
      double u, v;
      if (!geo.back_project(j - geo.cu, i - geo.cv, u, v)) continue;
      const double sj = u + geo.cu;
      const double si = v + geo.cv;
      if (si < -0.5 || si > x.height() - 0.5 || sj < -0.5 || sj > x.width() - 0.5) continue;
      ++visible;
      for (int c = 0; c < x.channels(); ++c) out.at(c, i, j) = bilinear(x, c, si, sj, fill);
    }
  }
  if (visible == 0) throw ContractViolation("warp_yaw: no part of the print is visible");
  return out;
}

ImageTensor unwarp_yaw(const ImageTensor& captured, double yaw_degrees, double fill) {
  require(std::abs(yaw_degrees) < 90.0, "unwarp_yaw: |yaw| must be below 90 degrees");
  if (yaw_degrees == 0.0) return captured;
  const YawGeometry geo(captured, yaw_degrees);
  ImageTensor out(captured.height(), captured.width(), captured.channels(), fill);
  for (int i = 0; i < captured.height(); ++i) {
    for (int j = 0; j < captured.width(); ++j) {
      double up, vp;
      if (!geo.project(j - geo.cu, i - geo.cv, up, vp)) continue;
      for (int c = 0; c < captured.channels(); ++c) {
        out.at(c, i, j) = bilinear(captured, c, vp + geo.cv, up + geo.cu, fill);
      }
    }
  }
  return out;
}

ImageTensor simulate_print(const ImageTensor& x, const CaptureParams& params) {
  params.validate();
  require_range(x, 0.0, 1.0, "simulate_print");
  ImageTensor out = x;
  const double levels = params.print_levels - 1;
  for (double& v : out.data()) {
    v = std::floor(v * levels + 0.5) / levels;
    if (params.dot_gain_gamma != 1.0) v = std::pow(v, params.dot_gain_gamma);
  }
  return gaussian_blur(out, params.print_blur_sigma);
}

ImageTensor simulate_capture(const ImageTensor& printed, const CaptureParams& params) {
  params.validate();
  const double exposure = params.illuminance / kReferenceLux;
  const auto gains = white_balance_gains(params.color_temperature);
  ImageTensor lit = printed;
  const std::size_t plane = lit.plane_size();
  for (int c = 0; c < lit.channels(); ++c) {
    const double gain = lit.channels() == 3 ? gains[c] : 1.0;
    for (std::size_t k = 0; k < plane; ++k) {
      double& v = lit.data()[c * plane + k];
      v = std::clamp(v * exposure, 0.0, 1.0) * gain;
    }
  }
  ImageTensor out = gaussian_blur(warp_yaw(lit, params.yaw_degrees), params.blur_sigma);
  if (params.sensor_noise_sigma > 0.0) {
    Rng rng(derive_seed(params.seed, "sensor-noise"));
    for (double& v : out.data()) v += params.sensor_noise_sigma * rng.normal();
  }
  for (double& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

double laplacian_energy(const ImageTensor& x) {
  const int H = x.height();
  const int W = x.width();
  if (H < 3 || W < 3) return 0.0;
  double total = 0.0;
  for (int c = 0; c < x.channels(); ++c) {
    for (int i = 1; i < H - 1; ++i) {
      for (int j = 1; j < W - 1; ++j) {
        const double lap = 4 * x.at(c, i, j) - x.at(c, i - 1, j) - x.at(c, i + 1, j) -
                           x.at(c, i, j - 1) - x.at(c, i, j + 1);
        total += lap * lap;
      }
    }
  }
  return total / (static_cast<double>(H - 2) * (W - 2) * x.channels());
}

PhysicalEval physical_asr(const ImageTensor& x_adv, const ImageTensor& x_t,
                          const CaptureGrid& grid, const FeatureExtractor& model,
                          const VerificationThreshold& threshold,
                          const PhysicalOptions& options) {
  require(!grid.points.empty(), "physical_asr: capture grid is empty");
  require(threshold.model.empty() || threshold.model == model.name(),
          "physical_asr: threshold was calibrated for model " + threshold.model);
  const Embedding target = model.embed(x_t);
  PhysicalEval out;
  for (std::size_t k = 0; k < grid.points.size(); ++k) {
    const auto& p = grid.points[k];
    CaptureParams frontal = p;
    frontal.yaw_degrees = 0.0;
    frontal.sensor_noise_sigma = 0.0;
    const double floor = options.sharpness_floor *
                         laplacian_energy(simulate_capture(simulate_print(x_adv, p), frontal));
    const ImageTensor captured = simulate_capture(simulate_print(x_adv, p), p);
    const ImageTensor aligned = unwarp_yaw(captured, p.yaw_degrees);
    if (options.on_capture) options.on_capture(k, aligned);
    if (laplacian_energy(aligned) < floor) continue;
    ++out.retained;
    const double score = verification_score(model.embed(aligned), target, threshold.metric);
    out.scores.push_back(score);
    if (threshold.accepts(score)) ++out.successes;
  }
  if (out.retained == 0) {
    throw DegenerateGridError("physical_asr: every capture point was discarded by cleaning");
  }
  out.asr = static_cast<double>(out.successes) / static_cast<double>(out.retained);
  return out;
}

}  // namespace advface
