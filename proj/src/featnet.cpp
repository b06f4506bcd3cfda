#include "advface/featnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Core>

namespace advface {

namespace {

struct LayerShape {
  int width;
  int kernel;
};

std::vector<LayerShape> layer_table(Architecture arch) {
  switch (arch) {
    case Architecture::A: return {{8, 3}, {16, 3}, {32, 3}};
    case Architecture::B: return {{12, 3}, {24, 3}};
    case Architecture::C: return {{6, 3}, {12, 3}, {24, 3}, {32, 3}};
    case Architecture::D: return {{10, 5}, {20, 3}, {40, 3}};
  }
  return {};
}

constexpr double kConvGain = 1.5;
constexpr double kBiasScale = 0.1;
constexpr double kHeadGain = 4.0;
constexpr double kStdEps = 1e-4;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixMap = Eigen::Map<RowMatrix>;
using ConstRowMatrixMap = Eigen::Map<const RowMatrix>;

}  // namespace

const char* to_string(Architecture arch) {
  switch (arch) {
    case Architecture::A: return "A";
    case Architecture::B: return "B";
    case Architecture::C: return "C";
    case Architecture::D: return "D";
  }
  return "?";
}

Architecture architecture_from_string(const std::string& name) {
  if (name == "A") return Architecture::A;
  if (name == "B") return Architecture::B;
  if (name == "C") return Architecture::C;
  if (name == "D") return Architecture::D;
  throw ContractViolation("unknown architecture '" + name + "'");
}

FeatureExtractor::FeatureExtractor(ExtractorSpec spec) : spec_(std::move(spec)) {
  require(spec_.input_height >= 4 && spec_.input_width >= 4,
          "FeatureExtractor: input must be at least 4x4");
  require(spec_.input_channels == 1 || spec_.input_channels == 3,
          "FeatureExtractor: input channels must be 1 or 3");
  require(spec_.embed_dim >= 1, "FeatureExtractor: embed_dim must be positive");

  Rng rng(derive_seed(spec_.seed, std::string("arch-") + to_string(spec_.architecture)));
  int c = spec_.input_channels;
  int h = spec_.input_height;
  int w = spec_.input_width;
  for (const auto& shape : layer_table(spec_.architecture)) {
    ConvLayer layer;
    layer.in_channels = c;
    layer.out_channels = shape.width;
    layer.kernel = shape.kernel;
    layer.stride = 2;
    layer.in_h = h;
    layer.in_w = w;
    const int pad = layer.kernel / 2;
    layer.out_h = (h + 2 * pad - layer.kernel) / layer.stride + 1;
    layer.out_w = (w + 2 * pad - layer.kernel) / layer.stride + 1;
    const int fan_in = c * layer.kernel * layer.kernel;
    const double scale = kConvGain / std::sqrt(static_cast<double>(fan_in));
    layer.weights.resize(static_cast<std::size_t>(layer.out_channels) * fan_in);
    for (double& v : layer.weights) v = scale * rng.normal();
    layer.bias.resize(layer.out_channels);
    for (double& v : layer.bias) v = kBiasScale * rng.normal();
    convs_.push_back(std::move(layer));
    c = shape.width;
    h = convs_.back().out_h;
    w = convs_.back().out_w;
  }
  const double head_scale = kHeadGain / std::sqrt(static_cast<double>(c));
  head_weights_.resize(static_cast<std::size_t>(spec_.embed_dim) * c);
  for (double& v : head_weights_) v = head_scale * rng.normal();
  head_bias_.resize(spec_.embed_dim);
  for (double& v : head_bias_) v = kBiasScale * rng.normal();
}

bool FeatureExtractor::accepts(const ImageTensor& x) const {
  return x.height() == spec_.input_height && x.width() == spec_.input_width &&
         x.channels() == spec_.input_channels;
}

void FeatureExtractor::check_input(const ImageTensor& x) const {
  if (!accepts(x)) {
    throw ContractViolation(
        "extractor " + spec_.name + " expects " + std::to_string(spec_.input_height) +
        "x" + std::to_string(spec_.input_width) + "x" +
        std::to_string(spec_.input_channels) + " input, got " +
        std::to_string(x.height()) + "x" + std::to_string(x.width()) + "x" +
        std::to_string(x.channels()));
  }
}

// Rows are (in_channel, ky, kx), columns are output positions; taps falling
// in the zero padding stay 0.
std::vector<double> FeatureExtractor::im2col(const ConvLayer& L,
                                             const std::vector<double>& in) {
  const int pad = L.kernel / 2;
  const std::size_t in_plane = static_cast<std::size_t>(L.in_h) * L.in_w;
  const std::size_t out_plane = static_cast<std::size_t>(L.out_h) * L.out_w;
  std::vector<double> col(static_cast<std::size_t>(L.in_channels) * L.kernel * L.kernel *
                              out_plane,
                          0.0);
  double* dst = col.data();
  for (int c = 0; c < L.in_channels; ++c) {
    const double* src = in.data() + c * in_plane;
    for (int ky = 0; ky < L.kernel; ++ky) {
      for (int kx = 0; kx < L.kernel; ++kx, dst += out_plane) {
        for (int y = 0; y < L.out_h; ++y) {
          const int iy = y * L.stride + ky - pad;
          if (iy < 0 || iy >= L.in_h) continue;
          const double* row = src + static_cast<std::size_t>(iy) * L.in_w;
          double* orow = dst + static_cast<std::size_t>(y) * L.out_w;
          for (int xo = 0; xo < L.out_w; ++xo) {
            const int ix = xo * L.stride + kx - pad;
            if (ix >= 0 && ix < L.in_w) orow[xo] = row[ix];
          }
        }
      }
    }
  }
  return col;
}

std::vector<double> FeatureExtractor::col2im(const ConvLayer& L,
                                             const std::vector<double>& col) {
  const int pad = L.kernel / 2;
  const std::size_t in_plane = static_cast<std::size_t>(L.in_h) * L.in_w;
  const std::size_t out_plane = static_cast<std::size_t>(L.out_h) * L.out_w;
  std::vector<double> out(in_plane * L.in_channels, 0.0);
  const double* src = col.data();
  for (int c = 0; c < L.in_channels; ++c) {
    double* dst = out.data() + c * in_plane;
    for (int ky = 0; ky < L.kernel; ++ky) {
      for (int kx = 0; kx < L.kernel; ++kx, src += out_plane) {
        for (int y = 0; y < L.out_h; ++y) {
          const int iy = y * L.stride + ky - pad;
          if (iy < 0 || iy >= L.in_h) continue;
          double* row = dst + static_cast<std::size_t>(iy) * L.in_w;
          const double* crow = src + static_cast<std::size_t>(y) * L.out_w;
          for (int xo = 0; xo < L.out_w; ++xo) {
            const int ix = xo * L.stride + kx - pad;
            if (ix >= 0 && ix < L.in_w) row[ix] += crow[xo];
          }
        }
      }
    }
  }
  return out;
}

Embedding FeatureExtractor::forward(const ImageTensor& x, Trace* trace) const {
  check_input(x);
  const int C = x.channels();
  const std::size_t plane = x.plane_size();

  std::vector<double> cur(x.size());
  std::vector<double> mean(C), inv_std(C);
  for (int c = 0; c < C; ++c) {
    const double* src = x.data().data() + c * plane;
    const double mu = std::accumulate(src, src + plane, 0.0) / plane;
    double var = 0.0;
    for (std::size_t k = 0; k < plane; ++k) var += (src[k] - mu) * (src[k] - mu);
    var /= plane;
    const double inv = 1.0 / std::sqrt(var + kStdEps);
    double* dst = cur.data() + c * plane;
    for (std::size_t k = 0; k < plane; ++k) dst[k] = (src[k] - mu) * inv;
    mean[c] = mu;
    inv_std[c] = inv;
  }
  if (trace != nullptr) {
    trace->mean = mean;
    trace->inv_std = inv_std;
    trace->standardized = cur;
  }

  for (const auto& L : convs_) {
    const std::size_t out_plane = static_cast<std::size_t>(L.out_h) * L.out_w;
    const std::vector<double> col = im2col(L, cur);
    const Eigen::Index fan_in = static_cast<Eigen::Index>(col.size() / out_plane);
    std::vector<double> out(out_plane * L.out_channels);
    RowMatrixMap out_m(out.data(), L.out_channels, out_plane);
    out_m.noalias() = ConstRowMatrixMap(L.weights.data(), L.out_channels, fan_in) *
                      ConstRowMatrixMap(col.data(), fan_in, out_plane);
    for (int o = 0; o < L.out_channels; ++o) out_m.row(o).array() += L.bias[o];
    for (double& v : out) v = std::tanh(v);
    cur = std::move(out);
    if (trace != nullptr) trace->activations.push_back(cur);
  }

  const auto& last = convs_.back();
  const std::size_t last_plane = static_cast<std::size_t>(last.out_h) * last.out_w;
  std::vector<double> pooled(last.out_channels);
  for (int o = 0; o < last.out_channels; ++o) {
    const double* src = cur.data() + o * last_plane;
    pooled[o] = std::accumulate(src, src + last_plane, 0.0) / last_plane;
  }

  Embedding e(spec_.embed_dim);
  for (int d = 0; d < spec_.embed_dim; ++d) {
    const double* wrow = head_weights_.data() + static_cast<std::size_t>(d) * pooled.size();
    double acc = head_bias_[d];
    for (std::size_t k = 0; k < pooled.size(); ++k) acc += wrow[k] * pooled[k];
    e[d] = acc;
  }
  if (trace != nullptr) trace->pooled = std::move(pooled);
  return e;
}

ImageTensor FeatureExtractor::backward(const Trace& trace,
                                       const Embedding& upstream) const {
  require(upstream.size() == static_cast<std::size_t>(spec_.embed_dim),
          "embed_input_grad: upstream length must equal embed_dim");
  const auto& last = convs_.back();
  const std::size_t pooled_n = trace.pooled.size();

  std::vector<double> d_pooled(pooled_n, 0.0);
  for (int d = 0; d < spec_.embed_dim; ++d) {
    const double u = upstream[d];
    if (u == 0.0) continue;
    const double* wrow = head_weights_.data() + static_cast<std::size_t>(d) * pooled_n;
    for (std::size_t k = 0; k < pooled_n; ++k) d_pooled[k] += u * wrow[k];
  }

  const std::size_t last_plane = static_cast<std::size_t>(last.out_h) * last.out_w;
  std::vector<double> d_cur(last_plane * last.out_channels);
  for (int o = 0; o < last.out_channels; ++o) {
    std::fill(d_cur.begin() + o * last_plane, d_cur.begin() + (o + 1) * last_plane,
              d_pooled[o] / static_cast<double>(last_plane));
  }

  for (std::size_t li = convs_.size(); li-- > 0;) {
    const auto& L = convs_[li];
    const auto& act = trace.activations[li];
    for (std::size_t k = 0; k < d_cur.size(); ++k) d_cur[k] *= 1.0 - act[k] * act[k];

    const std::size_t out_plane = static_cast<std::size_t>(L.out_h) * L.out_w;
    const Eigen::Index fan_in =
        static_cast<Eigen::Index>(L.in_channels) * L.kernel * L.kernel;
    std::vector<double> d_col(static_cast<std::size_t>(fan_in) * out_plane);
    RowMatrixMap(d_col.data(), fan_in, out_plane).noalias() =
        ConstRowMatrixMap(L.weights.data(), L.out_channels, fan_in).transpose() *
        ConstRowMatrixMap(d_cur.data(), L.out_channels, out_plane);
    std::vector<double> d_in = col2im(L, d_col);
    d_cur = std::move(d_in);
  }

  // Standardization: dx = inv * (dy - mean(dy) - y * mean(dy * y)).
  const int C = spec_.input_channels;
  ImageTensor grad(spec_.input_height, spec_.input_width, C, 0.0);
  const std::size_t plane = grad.plane_size();
  for (int c = 0; c < C; ++c) {
    const double* dy = d_cur.data() + c * plane;
    const double* y = trace.standardized.data() + c * plane;
    double mean_dy = 0.0;
    double mean_dyy = 0.0;
    for (std::size_t k = 0; k < plane; ++k) {
      mean_dy += dy[k];
      mean_dyy += dy[k] * y[k];
    }
    mean_dy /= plane;
    mean_dyy /= plane;
    double* dst = grad.data().data() + c * plane;
    for (std::size_t k = 0; k < plane; ++k) {
      dst[k] = trace.inv_std[c] * (dy[k] - mean_dy - y[k] * mean_dyy);
    }
  }
  return grad;
}

Embedding FeatureExtractor::embed(const ImageTensor& x) const {
  return forward(x, nullptr);
}

ImageTensor FeatureExtractor::embed_input_grad(const ImageTensor& x,
                                               const Embedding& upstream) const {
  ImageTensor grad;
  embed_with_grad(x, [&](const Embedding&) { return upstream; }, &grad);
  return grad;
}

const char* to_string(Metric metric) {
  return metric == Metric::L2 ? "l2" : "cosine";
}

Metric metric_from_string(const std::string& name) {
  if (name == "l2" || name == "L2") return Metric::L2;
  if (name == "cosine") return Metric::Cosine;
  throw ContractViolation("unknown metric '" + name + "'");
}

namespace {

double norm(const Embedding& a) {
  return std::sqrt(std::inner_product(a.begin(), a.end(), a.begin(), 0.0));
}

}  // namespace

double feature_distance(const Embedding& a, const Embedding& b, Metric metric) {
  require(a.size() == b.size(), "feature_distance: embedding lengths differ");
  if (metric == Metric::L2) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(s);
  }
  const double na = norm(a);
  const double nb = norm(b);
  require(na > 0.0 && nb > 0.0, "feature_distance: cosine of a zero-norm embedding");
  const double cos = std::inner_product(a.begin(), a.end(), b.begin(), 0.0) / (na * nb);
  return 1.0 - cos;
}

Embedding feature_distance_grad(const Embedding& a, const Embedding& target,
                                Metric metric) {
  require(a.size() == target.size(), "feature_distance_grad: embedding lengths differ");
  Embedding g(a.size(), 0.0);
  if (metric == Metric::L2) {
    const double d = feature_distance(a, target, Metric::L2);
    if (d == 0.0) return g;
    for (std::size_t k = 0; k < a.size(); ++k) g[k] = (a[k] - target[k]) / d;
    return g;
  }
  const double na = norm(a);
  const double nb = norm(target);
  require(na > 0.0 && nb > 0.0, "feature_distance_grad: cosine of a zero-norm embedding");
  const double dot = std::inner_product(a.begin(), a.end(), target.begin(), 0.0);
  for (std::size_t k = 0; k < a.size(); ++k) {
    g[k] = -(target[k] / (na * nb) - dot * a[k] / (na * na * na * nb));
  }
  return g;
}

EnsembleSpec EnsembleSpec::uniform(std::vector<ExtractorPtr> members) {
  EnsembleSpec spec;
  const double w = members.empty() ? 0.0 : 1.0 / static_cast<double>(members.size());
  spec.weights.assign(members.size(), w);
  spec.members = std::move(members);
  return spec;
}

void EnsembleSpec::validate() const {
  require(!members.empty(), "ensemble: member list is empty");
  require(members.size() == weights.size(), "ensemble: one weight per member required");
  double total = 0.0;
  for (std::size_t k = 0; k < members.size(); ++k) {
    require(members[k] != nullptr, "ensemble: null member");
    require(weights[k] >= 0.0 && std::isfinite(weights[k]),
            "ensemble: weights must be nonnegative");
    total += weights[k];
  }
  require(std::abs(total - 1.0) < 1e-9, "ensemble: weights must sum to 1");
}

std::vector<std::string> EnsembleSpec::member_names() const {
  std::vector<std::string> out;
  for (const auto& m : members) out.push_back(m->name());
  return out;
}

void DiversityConfig::validate() const {
  require(max_crop_fraction >= 0.0 && max_crop_fraction < 0.5,
          "input diversity: max_crop_fraction must be in [0, 0.5)");
}

int max_crop_pixels(int edge, double fraction) {
  return static_cast<int>(std::floor(fraction * edge));
}

CropResize sample_crop(int height, int width, const DiversityConfig& cfg, Rng& rng) {
  cfg.validate();
  CropResize t;
  t.height = height;
  t.width = width;
  const int max_v = max_crop_pixels(height, cfg.max_crop_fraction);
  const int max_h = max_crop_pixels(width, cfg.max_crop_fraction);
  t.top = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_v)));
  t.bottom = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_v)));
  t.left = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_h)));
  t.right = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_h)));
  return t;
}

namespace {

// Source sampling position (pixel-centre convention) of output index `o` when
// `window` source pixels starting at `offset` are stretched over `out` pixels.
struct Tap {
  int lo;
  int hi;
  double frac;
};

std::vector<Tap> resize_taps(int out, int offset, int window) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(window) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(window - 1));
    const int lo = static_cast<int>(std::floor(src));
    const int hi = std::min(lo + 1, window - 1);
    taps[o] = {offset + lo, offset + hi, src - lo};
  }
  return taps;
}

}  // namespace

ImageTensor CropResize::apply(const ImageTensor& x) const {
  require(x.height() == height && x.width() == width, "CropResize: shape mismatch");
  if (is_identity()) return x;
  const auto rows = resize_taps(height, top, height - top - bottom);
  const auto cols = resize_taps(width, left, width - left - right);
  ImageTensor out(height, width, x.channels());
  for (int c = 0; c < x.channels(); ++c) {
    for (int i = 0; i < height; ++i) {
      const auto& r = rows[i];
      for (int j = 0; j < width; ++j) {
        const auto& q = cols[j];
        const double top_v = x.at(c, r.lo, q.lo) * (1 - q.frac) + x.at(c, r.lo, q.hi) * q.frac;
        const double bot_v = x.at(c, r.hi, q.lo) * (1 - q.frac) + x.at(c, r.hi, q.hi) * q.frac;
        out.at(c, i, j) = top_v * (1 - r.frac) + bot_v * r.frac;
      }
    }
  }
  return out;
}

ImageTensor CropResize::pullback(const ImageTensor& grad_out) const {
  require(grad_out.height() == height && grad_out.width() == width,
          "CropResize: shape mismatch");
  if (is_identity()) return grad_out;
  const auto rows = resize_taps(height, top, height - top - bottom);
  const auto cols = resize_taps(width, left, width - left - right);
  ImageTensor g(height, width, grad_out.channels(), 0.0);
  for (int c = 0; c < grad_out.channels(); ++c) {
    for (int i = 0; i < height; ++i) {
      const auto& r = rows[i];
      for (int j = 0; j < width; ++j) {
        const auto& q = cols[j];
        const double v = grad_out.at(c, i, j);
        g.at(c, r.lo, q.lo) += v * (1 - r.frac) * (1 - q.frac);
        g.at(c, r.lo, q.hi) += v * (1 - r.frac) * q.frac;
        g.at(c, r.hi, q.lo) += v * r.frac * (1 - q.frac);
        g.at(c, r.hi, q.hi) += v * r.frac * q.frac;
      }
    }
  }
  return g;
}

ImageTensor apply_input_diversity(const ImageTensor& x, const DiversityConfig& cfg,
                                  Rng& rng) {
  require(cfg.enabled, "apply_input_diversity: diversity is disabled");
  return sample_crop(x.height(), x.width(), cfg, rng).apply(x);
}

DistanceEval ensemble_distance(const EnsembleSpec& spec, const ImageTensor& x_train,
                               const ImageTensor& x_t, Metric metric) {
  spec.validate();
  DistanceEval out;
  out.grad = ImageTensor(x_train.height(), x_train.width(), x_train.channels(), 0.0);
  for (std::size_t k = 0; k < spec.members.size(); ++k) {
    const auto& f = *spec.members[k];
    const Embedding target = f.embed(x_t);
    ImageTensor g;
    const Embedding e = f.embed_with_grad(
        x_train, [&](const Embedding& emb) { return feature_distance_grad(emb, target, metric); },
        &g);
    out.distance += spec.weights[k] * feature_distance(e, target, metric);
    auto dst = out.grad.data();
    auto src = g.data();
    for (std::size_t n = 0; n < dst.size(); ++n) dst[n] += spec.weights[k] * src[n];
  }
  return out;
}

}  // namespace advface
