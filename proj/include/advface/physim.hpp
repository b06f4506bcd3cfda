#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "advface/featnet.hpp"
#include "advface/image.hpp"

namespace advface {

// One simulated print-and-capture condition.
struct CaptureParams {
  double illuminance = 1200.0;       // lux; 1200 maps to unit exposure
  double color_temperature = 6500.0; // kelvin; 6500 is neutral
  double yaw_degrees = 0.0;          // camera position on the horizontal arc
  double blur_sigma = 1.0;           // camera defocus, pixels
  double sensor_noise_sigma = 0.01;
  int print_levels = 64;             // per-channel printable levels
  double dot_gain_gamma = 1.1;       // 1 disables dot gain
  double print_blur_sigma = 0.5;     // ink spread, pixels; 0 disables
  std::uint64_t seed = 0;

  void validate() const;
  // Neutral settings: print and capture reduce to 8-bit quantization.
  static CaptureParams neutral();
};

struct CaptureGrid {
  std::vector<CaptureParams> points;
};

struct CaptureGridSpec {
  std::vector<double> illuminance{800.0, 1200.0};
  std::vector<double> color_temperature{3000.0, 5000.0};
  int n_angles = 5;
  double arc_degrees = 45.0;  // total arc, centred on the frontal view
  CaptureParams base;         // blur/noise/print settings shared by all points
  std::uint64_t seed = 0;
};

// Cross product illuminance x temperature x yaw, enumerated in that order,
// each point carrying its own derived noise seed.
CaptureGrid make_capture_grid(const CaptureGridSpec& spec);

// Per-channel multiplicative gains of a light source at `kelvin`, normalized
// so 6500K maps to (1,1,1). Uses the Helland blackbody RGB fit.
std::array<double, 3> kelvin_to_rgb(double kelvin);
std::array<double, 3> white_balance_gains(double kelvin);

ImageTensor gaussian_blur(const ImageTensor& x, double sigma);

// Perspective view of the print plane rotated by `yaw_degrees` about its
// vertical centre line, from a pinhole camera at 1.5 image widths, zoomed out
// just enough to keep the whole print in frame. Uncovered
// pixels take `fill`. Throws ContractViolation if nothing of the print is visible.
ImageTensor warp_yaw(const ImageTensor& x, double yaw_degrees, double fill = 0.5);
// Exact inverse mapping back to the frontal view (known geometry alignment).
ImageTensor unwarp_yaw(const ImageTensor& captured, double yaw_degrees, double fill = 0.5);

ImageTensor simulate_print(const ImageTensor& x, const CaptureParams& params);
ImageTensor simulate_capture(const ImageTensor& printed, const CaptureParams& params);

// Mean squared 4-neighbour Laplacian over interior pixels and channels.
double laplacian_energy(const ImageTensor& x);

struct VerificationThreshold;

struct PhysicalOptions {
  // A capture is discarded when its realigned Laplacian energy falls below
  // this fraction of the noise-free frontal capture under the same settings.
  double sharpness_floor = 0.25;
  std::function<void(std::size_t, const ImageTensor&)> on_capture;
};

struct PhysicalEval {
  double asr = 0.0;
  std::size_t retained = 0;
  std::size_t successes = 0;
  std::vector<double> scores;  // per retained point, metric orientation
};

// print -> capture -> realign -> embed -> threshold, over every grid point.
PhysicalEval physical_asr(const ImageTensor& x_adv, const ImageTensor& x_t,
                          const CaptureGrid& grid, const FeatureExtractor& model,
                          const VerificationThreshold& threshold,
                          const PhysicalOptions& options = {});

}  // namespace advface
