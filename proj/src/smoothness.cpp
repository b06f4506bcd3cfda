#include "advface/smoothness.hpp"

#include <algorithm>
#include <cmath>

namespace advface {

const char* to_string(SmoothnessKind kind) {
  switch (kind) {
    case SmoothnessKind::None: return "none";
    case SmoothnessKind::TV: return "tv";
    case SmoothnessKind::Masked: return "masked";
  }
  return "?";
}

SmoothnessKind smoothness_kind_from_string(const std::string& name) {
  if (name == "none") return SmoothnessKind::None;
  if (name == "tv") return SmoothnessKind::TV;
  if (name == "masked") return SmoothnessKind::Masked;
  throw ContractViolation("unknown smoothness kind '" + name + "'");
}

namespace {

void check_region(const ImageTensor& r, const BinaryMask& region,
                  const char* op) {
  require(region.matches(r), std::string(op) + ": region dimensions do not match image");
  require(r.height() >= 2 && r.width() >= 2,
          std::string(op) + ": image must be at least 2x2");
}

void check_masked(const ImageTensor& current, const SmoothnessSpec& spec,
                  const BinaryMask& region, const char* op) {
  check_region(current, region, op);
  require(spec.kind == SmoothnessKind::Masked,
          std::string(op) + ": spec kind must be masked");
  require(spec.reference.same_shape(current),
          std::string(op) + ": reference shape does not match image");
  require(spec.thresholds.height() == current.height() &&
              spec.thresholds.width() == current.width(),
          std::string(op) + ": threshold matrix dimensions do not match image");
}

// Shared kernel for both losses. `active` holds one flag per (c,i,j) entry;
// a forward pair counts iff both ends are active. For plain TV `active` is the
// region broadcast over channels.
double pair_tv(const ImageTensor& p, const std::vector<unsigned char>& active,
               ImageTensor* grad) {
  const int H = p.height();
  const int W = p.width();
  double total = 0.0;
  for (int c = 0; c < p.channels(); ++c) {
    for (int i = 0; i < H; ++i) {
      for (int j = 0; j < W; ++j) {
        const std::size_t k = p.index(c, i, j);
        if (!active[k]) continue;
        const double v = p.data()[k];
        double dv = 0.0;
        double dh = 0.0;
        bool has_v = false;
        bool has_h = false;
        if (i + 1 < H && active[k + W]) {
          dv = v - p.data()[k + W];
          has_v = true;
        }
        if (j + 1 < W && active[k + 1]) {
          dh = v - p.data()[k + 1];
          has_h = true;
        }
        const double t = std::sqrt(dv * dv + dh * dh);
        total += t;
        if (grad != nullptr && t > 0.0) {
          auto g = grad->data();
          g[k] += (dv + dh) / t;
          if (has_v) g[k + W] -= dv / t;
          if (has_h) g[k + 1] -= dh / t;
        }
      }
    }
  }
  return total;
}

std::vector<unsigned char> broadcast(const ImageTensor& img,
                                     const BinaryMask& region) {
  std::vector<unsigned char> active(img.size());
  const std::size_t plane = img.plane_size();
  auto m = region.data();
  for (int c = 0; c < img.channels(); ++c) {
    std::copy(m.begin(), m.end(), active.begin() + c * plane);
  }
  return active;
}

}  // namespace

double tv_loss(const ImageTensor& r, const BinaryMask& region) {
  check_region(r, region, "tv_loss");
  return pair_tv(r, broadcast(r, region), nullptr);
}

ImageTensor tv_loss_grad(const ImageTensor& r, const BinaryMask& region) {
  check_region(r, region, "tv_loss_grad");
  ImageTensor grad(r.height(), r.width(), r.channels(), 0.0);
  pair_tv(r, broadcast(r, region), &grad);
  return grad;
}

std::vector<unsigned char> activation_mask(const ImageTensor& current,
                                           const SmoothnessSpec& spec,
                                           const BinaryMask& region) {
  check_masked(current, spec, region, "activation_mask");
  std::vector<unsigned char> active(current.size(), 0);
  for (int c = 0; c < current.channels(); ++c) {
    for (int i = 0; i < current.height(); ++i) {
      for (int j = 0; j < current.width(); ++j) {
        if (!region(i, j)) continue;
        const double dev = current.at(c, i, j) - spec.reference.at(c, i, j);
        active[current.index(c, i, j)] = std::abs(dev) >= spec.thresholds(i, j);
      }
    }
  }
  return active;
}

double masked_smoothness(const ImageTensor& current, const SmoothnessSpec& spec,
                         const BinaryMask& region) {
  check_masked(current, spec, region, "masked_smoothness");
  return pair_tv(current - spec.reference, activation_mask(current, spec, region),
                 nullptr);
}

ImageTensor masked_smoothness_grad(const ImageTensor& current,
                                   const SmoothnessSpec& spec,
                                   const BinaryMask& region) {
  check_masked(current, spec, region, "masked_smoothness_grad");
  ImageTensor grad(current.height(), current.width(), current.channels(), 0.0);
  pair_tv(current - spec.reference, activation_mask(current, spec, region), &grad);
  return grad;
}

SmoothnessEval weighted_smoothness(const ImageTensor& current,
                                   const ImageTensor& base,
                                   const SmoothnessSpec& spec,
                                   const BinaryMask& region, bool want_grad) {
  SmoothnessEval out;
  if (want_grad) out.grad = ImageTensor(current.height(), current.width(), current.channels(), 0.0);
  if (spec.kind == SmoothnessKind::None || spec.gamma == 0.0) return out;
  require(spec.gamma >= 0.0, "smoothness weight gamma must be nonnegative");

  ImageTensor grad;
  if (spec.kind == SmoothnessKind::TV) {
    const ImageTensor r = current - base;
    out.value = tv_loss(r, region);
    if (want_grad) grad = tv_loss_grad(r, region);
  } else {
    out.value = masked_smoothness(current, spec, region);
    if (want_grad) grad = masked_smoothness_grad(current, spec, region);
  }
  out.value *= spec.gamma;
  if (want_grad) out.grad = spec.gamma * grad;
  return out;
}

ImageTensor compose_combo(const ImageTensor& x_s, const ImageTensor& delta_p,
                          const ImageTensor& delta_s, const BinaryMask& patch_mask,
                          const BinaryMask& noise_mask) {
  require(x_s.same_shape(delta_p) && x_s.same_shape(delta_s),
          "compose_combo: image/noise shapes differ");
  require(patch_mask.matches(x_s) && noise_mask.matches(x_s),
          "compose_combo: mask dimensions do not match image");
  require(!patch_mask.overlaps(noise_mask),
          "compose_combo: patch and noise masks overlap");
  ImageTensor out = x_s;
  for (int c = 0; c < x_s.channels(); ++c) {
    for (int i = 0; i < x_s.height(); ++i) {
      for (int j = 0; j < x_s.width(); ++j) {
        double delta;
        if (patch_mask(i, j)) {
          delta = delta_p.at(c, i, j);
        } else if (noise_mask(i, j)) {
          delta = delta_s.at(c, i, j);
        } else {
          continue;
        }
        out.at(c, i, j) = std::clamp(x_s.at(c, i, j) + delta, 0.0, 1.0);
      }
    }
  }
  return out;
}

}  // namespace advface
