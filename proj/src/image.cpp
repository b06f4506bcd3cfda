#include "advface/image.hpp"

#include <algorithm>
#include <cmath>

namespace advface {

ImageTensor::ImageTensor(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  require(height > 0 && width > 0, "ImageTensor: dimensions must be positive");
  require(channels == 1 || channels == 3, "ImageTensor: channels must be 1 or 3");
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

ImageTensor::ImageTensor(int height, int width, int channels,
                         std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  require(height > 0 && width > 0, "ImageTensor: dimensions must be positive");
  require(channels == 1 || channels == 3, "ImageTensor: channels must be 1 or 3");
  require(data_.size() == static_cast<std::size_t>(height) * width * channels,
          "ImageTensor: data length does not match dimensions");
}

BinaryMask::BinaryMask(int height, int width, bool fill)
    : height_(height), width_(width) {
  require(height > 0 && width > 0, "BinaryMask: dimensions must be positive");
  data_.assign(static_cast<std::size_t>(height) * width, fill ? 1 : 0);
}

BinaryMask::BinaryMask(int height, int width, std::vector<unsigned char> data)
    : height_(height), width_(width), data_(std::move(data)) {
  require(height > 0 && width > 0, "BinaryMask: dimensions must be positive");
  require(data_.size() == static_cast<std::size_t>(height) * width,
          "BinaryMask: data length does not match dimensions");
  for (auto v : data_) require(v == 0 || v == 1, "BinaryMask: values must be 0 or 1");
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), 1));
}

BinaryMask BinaryMask::complement() const {
  BinaryMask out = *this;
  for (auto& v : out.data_) v = v ? 0 : 1;
  return out;
}

BinaryMask BinaryMask::united(const BinaryMask& other) const {
  require(matches(other), "BinaryMask::united: dimension mismatch");
  BinaryMask out = *this;
  for (std::size_t k = 0; k < data_.size(); ++k) out.data_[k] |= other.data_[k];
  return out;
}

bool BinaryMask::overlaps(const BinaryMask& other) const {
  require(matches(other), "BinaryMask::overlaps: dimension mismatch");
  for (std::size_t k = 0; k < data_.size(); ++k) {
    if (data_[k] && other.data_[k]) return true;
  }
  return false;
}

ThresholdMatrix::ThresholdMatrix(int height, int width, double fill)
    : height_(height), width_(width) {
  require(height > 0 && width > 0, "ThresholdMatrix: dimensions must be positive");
  require(std::isfinite(fill) && fill >= 0.0,
          "ThresholdMatrix: thresholds must be finite and nonnegative");
  data_.assign(static_cast<std::size_t>(height) * width, fill);
}

ThresholdMatrix::ThresholdMatrix(int height, int width, std::vector<double> data)
    : height_(height), width_(width), data_(std::move(data)) {
  require(height > 0 && width > 0, "ThresholdMatrix: dimensions must be positive");
  require(data_.size() == static_cast<std::size_t>(height) * width,
          "ThresholdMatrix: data length does not match dimensions");
  for (double t : data_) {
    require(std::isfinite(t) && t >= 0.0,
            "ThresholdMatrix: thresholds must be finite and nonnegative");
  }
}

void ThresholdMatrix::set(int i, int j, double tau) {
  require(std::isfinite(tau) && tau >= 0.0,
          "ThresholdMatrix: thresholds must be finite and nonnegative");
  data_[static_cast<std::size_t>(i) * width_ + j] = tau;
}

void require_range(const ImageTensor& img, double lo, double hi,
                   const std::string& what) {
  for (double v : img.data()) {
    if (!std::isfinite(v) || v < lo || v > hi) {
      throw ContractViolation(what + ": pixel value outside [" +
                              std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
  }
}

ImageTensor operator-(const ImageTensor& a, const ImageTensor& b) {
  require(a.same_shape(b), "image subtraction: shape mismatch");
  ImageTensor out = a;
  auto o = out.data();
  auto bv = b.data();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] -= bv[k];
  return out;
}

ImageTensor operator+(const ImageTensor& a, const ImageTensor& b) {
  require(a.same_shape(b), "image addition: shape mismatch");
  ImageTensor out = a;
  auto o = out.data();
  auto bv = b.data();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] += bv[k];
  return out;
}

ImageTensor operator*(double s, const ImageTensor& a) {
  ImageTensor out = a;
  for (double& v : out.data()) v *= s;
  return out;
}

double max_abs_diff(const ImageTensor& a, const ImageTensor& b) {
  require(a.same_shape(b), "max_abs_diff: shape mismatch");
  double m = 0.0;
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t k = 0; k < av.size(); ++k) m = std::max(m, std::abs(av[k] - bv[k]));
  return m;
}

double max_abs_diff(const ImageTensor& a, const ImageTensor& b,
                    const BinaryMask& mask) {
  require(a.same_shape(b) && mask.matches(a), "max_abs_diff: shape mismatch");
  double m = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    for (int i = 0; i < a.height(); ++i) {
      for (int j = 0; j < a.width(); ++j) {
        if (mask(i, j)) m = std::max(m, std::abs(a.at(c, i, j) - b.at(c, i, j)));
      }
    }
  }
  return m;
}

}  // namespace advface
