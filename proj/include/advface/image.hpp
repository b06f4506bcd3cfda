#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "advface/errors.hpp"

namespace advface {

// H x W x C grid of doubles stored channel-planar: index = (c*H + i)*W + j.
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(int height, int width, int channels, double fill = 0.0);
  ImageTensor(int height, int width, int channels, std::vector<double> data);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  std::size_t plane_size() const {
    return static_cast<std::size_t>(height_) * width_;
  }
  bool empty() const { return data_.empty(); }

  double& at(int c, int i, int j) { return data_[index(c, i, j)]; }
  double at(int c, int i, int j) const { return data_[index(c, i, j)]; }
  std::size_t index(int c, int i, int j) const {
    return (static_cast<std::size_t>(c) * height_ + i) * width_ + j;
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool same_shape(const ImageTensor& other) const {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }

  bool operator==(const ImageTensor& other) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

// Per-pixel {0,1} mask shared by every channel of the image it masks.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width, bool fill = false);
  BinaryMask(int height, int width, std::vector<unsigned char> data);

  static BinaryMask full(int height, int width) {
    return BinaryMask(height, width, true);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  bool operator()(int i, int j) const {
    return data_[static_cast<std::size_t>(i) * width_ + j] != 0;
  }
  void set(int i, int j, bool v) {
    data_[static_cast<std::size_t>(i) * width_ + j] = v ? 1 : 0;
  }
  std::span<const unsigned char> data() const { return data_; }

  std::size_t count() const;
  bool matches(const ImageTensor& img) const {
    return height_ == img.height() && width_ == img.width();
  }
  bool matches(const BinaryMask& m) const {
    return height_ == m.height_ && width_ == m.width_;
  }

  BinaryMask complement() const;
  BinaryMask united(const BinaryMask& other) const;
  bool overlaps(const BinaryMask& other) const;

  bool operator==(const BinaryMask& other) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<unsigned char> data_;
};

// Per-pixel activation thresholds for the masked smoothness loss.
class ThresholdMatrix {
 public:
  ThresholdMatrix() = default;
  ThresholdMatrix(int height, int width, double fill);
  ThresholdMatrix(int height, int width, std::vector<double> data);

  int height() const { return height_; }
  int width() const { return width_; }
  double operator()(int i, int j) const {
    return data_[static_cast<std::size_t>(i) * width_ + j];
  }
  void set(int i, int j, double tau);
  std::span<const double> data() const { return data_; }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

// Throws ContractViolation unless every value is finite and within [lo, hi].
void require_range(const ImageTensor& img, double lo, double hi,
                   const std::string& what);

ImageTensor operator-(const ImageTensor& a, const ImageTensor& b);
ImageTensor operator+(const ImageTensor& a, const ImageTensor& b);
ImageTensor operator*(double s, const ImageTensor& a);

double max_abs_diff(const ImageTensor& a, const ImageTensor& b);

// Largest |a - b| over pixels where mask = 1 (all channels).
double max_abs_diff(const ImageTensor& a, const ImageTensor& b,
                    const BinaryMask& mask);

}  // namespace advface
