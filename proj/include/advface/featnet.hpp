#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "advface/image.hpp"
#include "advface/random.hpp"

namespace advface {

enum class Architecture { A, B, C, D };

const char* to_string(Architecture arch);
Architecture architecture_from_string(const std::string& name);

using Embedding = std::vector<double>;

struct ExtractorSpec {
  std::string name;  // model id used in ensembles, reports and audits
  Architecture architecture = Architecture::A;
  std::uint64_t seed = 0;
  int input_height = 112;
  int input_width = 112;
  int input_channels = 3;
  int embed_dim = 128;
};

// Deterministic random-weight face embedder:
//   per-image channel standardization -> strided conv/tanh stack
//   -> global average pool -> linear head.
// Weights are drawn once from the seed; instances are immutable.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(ExtractorSpec spec);

  const ExtractorSpec& spec() const { return spec_; }
  const std::string& name() const { return spec_.name; }
  int embed_dim() const { return spec_.embed_dim; }
  bool accepts(const ImageTensor& x) const;

  Embedding embed(const ImageTensor& x) const;

  // d(upstream . embed(x)) / dx by reverse-mode through every layer.
  ImageTensor embed_input_grad(const ImageTensor& x, const Embedding& upstream) const;

  // Forward pass returning the embedding together with the input gradient of
  // upstream_fn(embedding) . embedding, where the upstream vector may depend on
  // the embedding (used by the distance objectives to share one forward pass).
  template <typename UpstreamFn>
  Embedding embed_with_grad(const ImageTensor& x, UpstreamFn&& upstream_fn,
                            ImageTensor* grad) const {
    Trace trace;
    Embedding e = forward(x, &trace);
    if (grad != nullptr) *grad = backward(trace, upstream_fn(e));
    return e;
  }

 private:
  struct ConvLayer {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 3;
    int stride = 2;
    int in_h = 0, in_w = 0, out_h = 0, out_w = 0;
    std::vector<double> weights;  // [out][in][ky][kx]
    std::vector<double> bias;
  };
  struct Trace {
    std::vector<double> mean, inv_std;   // per input channel
    std::vector<double> standardized;    // CHW
    std::vector<std::vector<double>> activations;  // tanh outputs per conv
    std::vector<double> pooled;
  };

  Embedding forward(const ImageTensor& x, Trace* trace) const;
  ImageTensor backward(const Trace& trace, const Embedding& upstream) const;
  void check_input(const ImageTensor& x) const;
  static std::vector<double> im2col(const ConvLayer& L, const std::vector<double>& in);
  static std::vector<double> col2im(const ConvLayer& L, const std::vector<double>& col);

  ExtractorSpec spec_;
  std::vector<ConvLayer> convs_;
  std::vector<double> head_weights_;  // [embed_dim][pooled]
  std::vector<double> head_bias_;
};

using ExtractorPtr = std::shared_ptr<const FeatureExtractor>;

enum class Metric { L2, Cosine };

const char* to_string(Metric metric);
Metric metric_from_string(const std::string& name);

// L2: ||a-b||; cosine: 1 - a.b / (||a|| ||b||).
double feature_distance(const Embedding& a, const Embedding& b, Metric metric);

// Gradient of feature_distance(a, target) with respect to a. The L2 kink at
// a = target gets the zero subgradient.
Embedding feature_distance_grad(const Embedding& a, const Embedding& target,
                                Metric metric);

// Thread-safe record of which model ids were queried.
class QueryAudit {
 public:
  void record(const std::string& model) {
    std::lock_guard lock(mu_);
    queried_.insert(model);
  }
  std::set<std::string> queried() const {
    std::lock_guard lock(mu_);
    return queried_;
  }

 private:
  mutable std::mutex mu_;
  std::set<std::string> queried_;
};

struct EnsembleSpec {
  std::vector<ExtractorPtr> members;
  std::vector<double> weights;

  // Equal weights over the given members.
  static EnsembleSpec uniform(std::vector<ExtractorPtr> members);
  void validate() const;
  std::vector<std::string> member_names() const;
};

struct DiversityConfig {
  bool enabled = false;
  double max_crop_fraction = 0.07;
  std::uint64_t seed = 0;

  void validate() const;
};

// One sampled crop-and-resize transform. Crops are whole pixels removed from
// each edge; the remaining window is bilinearly resized to the input size.
struct CropResize {
  int height = 0;
  int width = 0;
  int top = 0, bottom = 0, left = 0, right = 0;

  bool is_identity() const { return top == 0 && bottom == 0 && left == 0 && right == 0; }
  ImageTensor apply(const ImageTensor& x) const;
  // Adjoint of apply: maps dL/d(apply(x)) to dL/dx.
  ImageTensor pullback(const ImageTensor& grad_out) const;
};

// Per-edge crop limit floor(fraction * edge).
int max_crop_pixels(int edge, double fraction);

CropResize sample_crop(int height, int width, const DiversityConfig& cfg, Rng& rng);

ImageTensor apply_input_diversity(const ImageTensor& x, const DiversityConfig& cfg,
                                  Rng& rng);

struct DistanceEval {
  double distance = 0.0;
  ImageTensor grad;
};

// Weighted sum of per-member distances to x_t and its input gradient.
DistanceEval ensemble_distance(const EnsembleSpec& spec, const ImageTensor& x_train,
                               const ImageTensor& x_t, Metric metric);

}  // namespace advface
