#pragma once

#include "advface/image.hpp"

namespace advface {

enum class SmoothnessKind { None, TV, Masked };

const char* to_string(SmoothnessKind kind);
SmoothnessKind smoothness_kind_from_string(const std::string& name);

// Regularizer selection plus its weight. `thresholds` and `reference` are
// only consulted for SmoothnessKind::Masked.
struct SmoothnessSpec {
  SmoothnessKind kind = SmoothnessKind::None;
  double gamma = 0.0;
  ThresholdMatrix thresholds;
  ImageTensor reference;
};

// Isotropic total variation of `r` restricted to `region`:
//   sum over region pixels of sqrt((r[i,j]-r[i+1,j])^2 + (r[i,j]-r[i,j+1])^2)
// A forward difference contributes only when the neighbour is inside both the
// image and the region. Channels are summed independently.
double tv_loss(const ImageTensor& r, const BinaryMask& region);
ImageTensor tv_loss_grad(const ImageTensor& r, const BinaryMask& region);

// Activation mask M of the masked loss: M[c,i,j] = 1 iff the pixel lies in
// `region` and |current - reference| >= tau[i,j].
std::vector<unsigned char> activation_mask(const ImageTensor& current,
                                           const SmoothnessSpec& spec,
                                           const BinaryMask& region);

// Threshold-masked smoothness: TV of p = current - reference where each
// forward-difference pair counts only if both ends are activated. M is held
// constant under differentiation.
double masked_smoothness(const ImageTensor& current, const SmoothnessSpec& spec,
                         const BinaryMask& region);
ImageTensor masked_smoothness_grad(const ImageTensor& current,
                                   const SmoothnessSpec& spec,
                                   const BinaryMask& region);

// gamma-weighted regularizer value and gradient, dispatching on spec.kind.
// For TV the penalized image is current - base (the perturbation); for
// Masked the deviation is taken from spec.reference. None yields 0.
struct SmoothnessEval {
  double value = 0.0;
  ImageTensor grad;
};
SmoothnessEval weighted_smoothness(const ImageTensor& current,
                                   const ImageTensor& base,
                                   const SmoothnessSpec& spec,
                                   const BinaryMask& region, bool want_grad);

// Patch-noise combination: clamp(x_s + M_s*delta_s + M_p*delta_p, 0, 1).
// Masks must be disjoint. Pixels outside both masks are copied from x_s.
ImageTensor compose_combo(const ImageTensor& x_s, const ImageTensor& delta_p,
                          const ImageTensor& delta_s, const BinaryMask& patch_mask,
                          const BinaryMask& noise_mask);

}  // namespace advface
