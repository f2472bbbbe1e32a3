#include "rbo/neural.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "kernels.hpp"
#include "rbo/error.hpp"

namespace rbo::neural {

namespace {

constexpr char kMagic[8] = {'R', 'B', 'O', 'N', 'E', 'T', '\0', '\0'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::size_t kPredictChunk = 512;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using RowVectorMap = Eigen::Map<Eigen::RowVectorXd>;
using ConstRowVectorMap = Eigen::Map<const Eigen::RowVectorXd>;

void check_row(const Network& net, const FeatureRow& row) {
  if (row.index.size() != row.value.size()) throw DataError("feature row index/value length mismatch");
  for (std::uint32_t i : row.index) {
    if (i >= net.spec().input_dim) {
      throw DataError("feature index " + std::to_string(i) + " exceeds network input width " +
                      std::to_string(net.spec().input_dim));
    }
  }
}

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Batched forward/backward over a set of rows. Weights are passed as a flat
// array indexed like the mean parameters, so the same code serves posterior
// means and sampled weights. The first layer is sparse; later layers are GEMMs.
class Engine {
 public:
  explicit Engine(const Network& net) : net_(net), act_(net.layers().size()) {}

  std::span<const double> forward(const double* w, std::span<const FeatureRow> rows,
                                  std::span<const std::size_t> ids) {
    const auto& layers = net_.layers();
    const auto batch = static_cast<Eigen::Index>(ids.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const LayerLayout& lay = layers[l];
      RowMatrix& z = act_[l];
      z.resize(batch, static_cast<Eigen::Index>(lay.out));
      const double* bias = w + lay.bias(0);
      if (l == 0) {
        for (Eigen::Index r = 0; r < batch; ++r) {
          double* zr = z.data() + r * z.cols();
          std::copy(bias, bias + lay.out, zr);
          const FeatureRow& x = rows[ids[static_cast<std::size_t>(r)]];
          for (std::size_t k = 0; k < x.index.size(); ++k) {
            const double v = x.value[k];
            const double* wr = w + lay.weight(x.index[k], 0);
            for (std::size_t j = 0; j < lay.out; ++j) zr[j] += v * wr[j];
          }
        }
      } else {
        const ConstMatrixMap weight(w + lay.weight(0, 0), static_cast<Eigen::Index>(lay.in),
                                    static_cast<Eigen::Index>(lay.out));
        z.noalias() = act_[l - 1] * weight;
        z.rowwise() += ConstRowVectorMap(bias, static_cast<Eigen::Index>(lay.out));
      }
      if (l + 1 < layers.size()) z = z.cwiseMax(0.0);
    }
    return {act_.back().data(), ids.size()};
  }

  // Adds sum_r dout[r] * d(output_r)/dw into grad_w; needs the preceding forward.
  void backward(const double* w, std::span<const FeatureRow> rows, std::span<const std::size_t> ids,
                std::span<const double> dout, double* grad_w) {
    const auto& layers = net_.layers();
    const auto batch = static_cast<Eigen::Index>(ids.size());
    delta_ = ConstMatrixMap(dout.data(), batch, 1);
    for (std::size_t l = layers.size(); l-- > 0;) {
      const LayerLayout& lay = layers[l];
      const auto in = static_cast<Eigen::Index>(lay.in);
      const auto out = static_cast<Eigen::Index>(lay.out);
      RowVectorMap(grad_w + lay.bias(0), out) += delta_.colwise().sum();
      if (l == 0) {
        for (Eigen::Index r = 0; r < batch; ++r) {
          const double* dr = delta_.data() + r * out;
          const FeatureRow& x = rows[ids[static_cast<std::size_t>(r)]];
          for (std::size_t k = 0; k < x.index.size(); ++k) {
            const double v = x.value[k];
            double* gr = grad_w + lay.weight(x.index[k], 0);
            for (std::size_t j = 0; j < lay.out; ++j) gr[j] += v * dr[j];
          }
        }
        break;
      }
      const RowMatrix& a = act_[l - 1];
      MatrixMap(grad_w + lay.weight(0, 0), in, out).noalias() += a.transpose() * delta_;
      next_.noalias() = delta_ * ConstMatrixMap(w + lay.weight(0, 0), in, out).transpose();
      next_ = next_.cwiseProduct((a.array() > 0.0).cast<double>().matrix());
      delta_.swap(next_);
    }
  }

  // Mean data loss over the batch; adds its gradient into grad_w when non-null.
  double loss(const double* w, const Batch& batch, LossKind kind, double margin, double* grad_w) {
    if (kind == LossKind::kMse) {
      if (batch.points.empty()) throw DataError("empty MSE batch");
      const double scale = 1.0 / static_cast<double>(batch.points.size());
      const auto out = forward(w, batch.rows, batch.points);
      dout_.assign(out.size(), 0.0);
      double total = 0.0;
      for (std::size_t k = 0; k < out.size(); ++k) {
        const double r = out[k] - batch.targets[batch.points[k]];
        total += r * r;
        dout_[k] = 2.0 * r * scale;
      }
      if (grad_w) backward(w, batch.rows, batch.points, dout_, grad_w);
      return total * scale;
    }

    if (batch.pairs.empty()) throw DataError("empty ranking batch");
    // Each distinct row is evaluated once; pair terms then share its output.
    slot_.assign(batch.rows.size(), kNoSlot);
    ids_.clear();
    for (const data::Pair& p : batch.pairs) {
      for (std::size_t row : {p.i, p.j}) {
        if (slot_[row] == kNoSlot) {
          slot_[row] = ids_.size();
          ids_.push_back(row);
        }
      }
    }
    const auto out = forward(w, batch.rows, ids_);
    dout_.assign(out.size(), 0.0);
    const double scale = 1.0 / static_cast<double>(batch.pairs.size());
    double total = 0.0;
    for (const data::Pair& p : batch.pairs) {
      const double s = sign_of(batch.targets[p.i] - batch.targets[p.j]);
      const std::size_t a = slot_[p.i], b = slot_[p.j];
      const double arg = -s * (out[a] - out[b]) + margin;
      if (arg > 0.0) {
        total += arg;
        dout_[a] -= s * scale;
        dout_[b] += s * scale;
      }
    }
    if (grad_w) backward(w, batch.rows, ids_, dout_, grad_w);
    return total * scale;
  }

 private:
  static constexpr std::size_t kNoSlot = std::numeric_limits<std::size_t>::max();

  const Network& net_;
  std::vector<RowMatrix> act_;  // post-activation per layer (pre-activation for the output)
  RowMatrix delta_, next_;
  std::vector<double> dout_;
  std::vector<std::size_t> ids_;
  std::vector<std::size_t> slot_;
};

// Sorted unique first-layer rows touched by a set of feature rows.
class ActiveRows {
 public:
  explicit ActiveRows(std::size_t input_dim) : mark_(input_dim, 0) {}

  template <typename Visit>
  const std::vector<std::uint32_t>& collect(Visit&& visit_rows) {
    rows_.clear();
    visit_rows([this](const FeatureRow& row) {
      for (std::uint32_t i : row.index) {
        if (!mark_[i]) {
          mark_[i] = 1;
          rows_.push_back(i);
        }
      }
    });
    for (std::uint32_t i : rows_) mark_[i] = 0;
    std::sort(rows_.begin(), rows_.end());
    return rows_;
  }

 private:
  std::vector<std::uint8_t> mark_;
  std::vector<std::uint32_t> rows_;
};

// A contiguous run of mean slots; its rho slots sit `shift` further on.
struct SlotRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t shift = 0;
};

void push_range(std::vector<SlotRange>& ranges, std::size_t begin, std::size_t end, std::size_t shift) {
  if (!ranges.empty() && ranges.back().end == begin && ranges.back().shift == shift) {
    ranges.back().end = end;
  } else {
    ranges.push_back({begin, end, shift});
  }
}

// Slots for the given first-layer rows plus the first-layer bias and every later layer.
std::vector<SlotRange> slot_ranges(const Network& net, std::span<const std::uint32_t> first_rows) {
  std::vector<SlotRange> ranges;
  const auto& layers = net.layers();
  const LayerLayout& first = layers.front();
  for (std::uint32_t r : first_rows) {
    push_range(ranges, first.weight(r, 0), first.weight(r, 0) + first.out, first.rho_shift());
  }
  push_range(ranges, first.bias(0), first.bias(0) + first.out, first.rho_shift());
  for (std::size_t l = 1; l < layers.size(); ++l) {
    push_range(ranges, layers[l].offset, layers[l].offset + layers[l].mu_count(), layers[l].rho_shift());
  }
  return ranges;
}

std::size_t slot_count(std::span<const SlotRange> ranges) {
  std::size_t n = 0;
  for (const SlotRange& r : ranges) n += r.end - r.begin;
  return n;
}

// Standard normals; reuses `buffer`.
void fill_normals(Rng& rng, std::vector<double>& buffer, std::size_t n) {
  const std::size_t even = n + (n & 1);
  buffer.resize(even);
  for (double& u : buffer) u = static_cast<double>((rng() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
  kernels::box_muller(buffer.data(), even);
}

// Draws zeta for every slot in `ranges` and writes eff = mu + sigma * zeta.
void draw(std::span<const double> params, std::span<const SlotRange> ranges, const std::vector<double>& sigma,
          Rng& rng, std::vector<double>& normals, double* zeta, double* eff) {
  fill_normals(rng, normals, slot_count(ranges));
  const double* z = normals.data();
  for (const SlotRange& r : ranges) {
    const std::size_t len = r.end - r.begin;
    std::copy(z, z + len, zeta + r.begin);
    kernels::reparameterize(params.data() + r.begin, sigma.data() + r.begin, z, eff + r.begin, len);
    z += len;
  }
}

// sigma and slope (indexed by mean slot) for the rho of every slot in `ranges`.
void refresh_sigma(std::span<const double> params, std::span<const SlotRange> ranges, std::vector<double>& sigma,
                   std::vector<double>& slope) {
  for (const SlotRange& r : ranges) {
    kernels::softplus_slope(params.data() + r.begin + r.shift, sigma.data() + r.begin, slope.data() + r.begin,
                            r.end - r.begin);
  }
}

kernels::AdamCoeffs adam_coeffs(const AdamOptions& o, std::size_t t) {
  kernels::AdamCoeffs c;
  c.beta1 = o.beta1;
  c.beta2 = o.beta2;
  c.eps = o.eps;
  c.step = o.learning_rate / (1.0 - std::pow(o.beta1, static_cast<double>(t)));
  c.inv_sqrt_c2 = 1.0 / std::sqrt(1.0 - std::pow(o.beta2, static_cast<double>(t)));
  return c;
}

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  const auto* bytes = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), bytes, bytes + sizeof(T));
}

template <typename T>
T take(std::span<const std::uint8_t> blob, std::size_t& pos) {
  if (pos + sizeof(T) > blob.size()) throw DataError("network blob truncated");
  T value;
  std::memcpy(&value, blob.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace

// ---------------------------------------------------------------------------

void NetworkSpec::validate() const {
  if (input_dim == 0) throw ConfigError("network input width must be positive");
  for (std::size_t h : hidden) {
    if (h == 0) throw ConfigError("hidden layer widths must be positive");
  }
  if (output_dim != 1) throw ConfigError("network output width must be 1");
}

FeatureRow from_fingerprint(const chem::Fingerprint& fp) {
  FeatureRow row;
  row.index = fp.on_bits();
  row.value.assign(row.index.size(), 1.0);
  return row;
}

FeatureRow dense_row(std::span<const double> values) {
  FeatureRow row;
  for (std::size_t i = 0; i < values.size(); ++i) {
    row.index.push_back(static_cast<std::uint32_t>(i));
    row.value.push_back(values[i]);
  }
  return row;
}

std::vector<FeatureRow> from_fingerprints(std::span<const chem::Fingerprint> fps) {
  std::vector<FeatureRow> rows;
  rows.reserve(fps.size());
  for (const auto& fp : fps) rows.push_back(from_fingerprint(fp));
  return rows;
}

Network::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::size_t in = spec_.input_dim;
  std::size_t offset = 0;
  std::vector<std::size_t> widths = spec_.hidden;
  widths.push_back(spec_.output_dim);
  for (std::size_t out : widths) {
    LayerLayout lay{in, out, offset, spec_.layer_kind == LayerKind::kVariational};
    offset += lay.param_count();
    layers_.push_back(lay);
    in = out;
  }
  params_.assign(offset, 0.0);
}

Network Network::initialized(NetworkSpec spec, Rng& rng, double init_sigma) {
  if (!(init_sigma > 0.0)) throw ConfigError("initial sigma must be positive");
  Network net(std::move(spec));
  // softplus^{-1}(sigma) = log(exp(sigma) - 1)
  const double rho0 = std::log(std::expm1(init_sigma));
  for (const LayerLayout& lay : net.layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(lay.in));
    for (std::size_t p = lay.offset; p < lay.offset + lay.mu_count(); ++p) {
      net.params_[p] = (2.0 * uniform01(rng) - 1.0) * bound;
      if (lay.variational) net.params_[p + lay.rho_shift()] = rho0;
    }
  }
  return net;
}

std::vector<std::uint8_t> Network::serialize() const {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint64_t>(out, spec_.input_dim);
  put<std::uint64_t>(out, spec_.output_dim);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(spec_.activation));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(spec_.layer_kind));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(spec_.hidden.size()));
  for (std::size_t h : spec_.hidden) put<std::uint64_t>(out, h);
  put<std::uint64_t>(out, params_.size());
  const auto* bytes = reinterpret_cast<const std::uint8_t*>(params_.data());
  out.insert(out.end(), bytes, bytes + params_.size() * sizeof(double));
  return out;
}

Network Network::deserialize(std::span<const std::uint8_t> blob) {
  if (blob.size() < sizeof(kMagic) || std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a network blob (bad magic)");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = take<std::uint32_t>(blob, pos);
  if (version != kFormatVersion) throw DataError("unsupported network blob version " + std::to_string(version));
  NetworkSpec spec;
  spec.input_dim = take<std::uint64_t>(blob, pos);
  spec.output_dim = take<std::uint64_t>(blob, pos);
  spec.activation = static_cast<Activation>(take<std::uint8_t>(blob, pos));
  spec.layer_kind = static_cast<LayerKind>(take<std::uint8_t>(blob, pos));
  if (spec.activation != Activation::kRelu ||
      (spec.layer_kind != LayerKind::kDense && spec.layer_kind != LayerKind::kVariational)) {
    throw DataError("network blob has an unknown activation or layer kind");
  }
  const auto n_hidden = take<std::uint32_t>(blob, pos);
  spec.hidden.clear();
  for (std::uint32_t i = 0; i < n_hidden; ++i) spec.hidden.push_back(take<std::uint64_t>(blob, pos));
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    throw DataError(std::string("network blob has an invalid spec: ") + e.what());
  }
  Network net(spec);
  const auto count = take<std::uint64_t>(blob, pos);
  if (count != net.params_.size()) throw DataError("network blob parameter count does not match its spec");
  if (blob.size() - pos != count * sizeof(double)) throw DataError("network blob has the wrong payload length");
  std::memcpy(net.params_.data(), blob.data() + pos, count * sizeof(double));
  return net;
}

void Network::save(const std::filesystem::path& path) const {
  const auto blob = serialize();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
}

Network Network::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  const std::vector<std::uint8_t> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(blob);
}

// ---------------------------------------------------------------------------

double softplus(double x) noexcept { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double ranking_loss(double y1, double y2, double yhat1, double yhat2, double margin) {
  return std::max(0.0, -sign_of(y1 - y2) * (yhat1 - yhat2) + margin);
}

double mse_loss(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) throw DataError("mse_loss: length mismatch");
  if (y.empty()) throw DataError("mse_loss: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return s / static_cast<double>(y.size());
}

double kl_gaussian(double mu, double sigma) {
  if (!(sigma > 0.0)) throw DataError("kl_gaussian: sigma must be positive");
  return 0.5 * (mu * mu + sigma * sigma - 1.0 - 2.0 * std::log(sigma));
}

double network_kl(const Network& net) {
  if (!net.variational()) return 0.0;
  const auto params = net.params();
  double total = 0.0;
  for (const LayerLayout& lay : net.layers()) {
    for (std::size_t p = lay.offset; p < lay.offset + lay.mu_count(); ++p) {
      total += kl_gaussian(params[p], softplus(params[p + lay.rho_shift()]));
    }
  }
  return total;
}

WeightNoise sample_noise(const Network& net, Rng& rng) {
  WeightNoise zeta(net.param_count(), 0.0);
  if (!net.variational()) return zeta;
  NormalSampler normal;
  for (const LayerLayout& lay : net.layers()) {
    for (std::size_t p = lay.offset; p < lay.offset + lay.mu_count(); ++p) zeta[p] = normal(rng);
  }
  return zeta;
}

namespace {

// Effective weights for a full noise vector (variational networks only).
AlignedBuffer effective_weights(const Network& net, const WeightNoise& noise) {
  if (noise.size() != net.param_count()) throw DataError("weight noise size does not match the network");
  AlignedBuffer eff(net.params().begin(), net.params().end());
  for (const LayerLayout& lay : net.layers()) {
    for (std::size_t p = lay.offset; p < lay.offset + lay.mu_count(); ++p) {
      eff[p] = eff[p] + softplus(eff[p + lay.rho_shift()]) * noise[p];
    }
  }
  return eff;
}

}  // namespace

double forward_with_noise(const Network& net, const FeatureRow& input, const WeightNoise* noise) {
  check_row(net, input);
  Engine engine(net);
  const std::size_t id = 0;
  const std::span<const FeatureRow> rows(&input, 1);
  if (noise && net.variational()) {
    const auto eff = effective_weights(net, *noise);
    return engine.forward(eff.data(), rows, {&id, 1})[0];
  }
  return engine.forward(net.params().data(), rows, {&id, 1})[0];
}

double forward(const Network& net, const FeatureRow& input, bool sample_weights, Rng& rng) {
  if (sample_weights && net.variational()) {
    const WeightNoise noise = sample_noise(net, rng);
    return forward_with_noise(net, input, &noise);
  }
  return forward_with_noise(net, input, nullptr);
}

double loss_and_gradient(const Network& net, const Batch& batch, LossKind loss, double margin,
                         const WeightNoise* noise, double kl_weight, std::vector<double>& grad) {
  for (const FeatureRow& row : batch.rows) check_row(net, row);
  Engine engine(net);
  grad.assign(net.param_count(), 0.0);
  AlignedBuffer grad_w(net.param_count(), 0.0);
  if (!net.variational()) {
    const double value = engine.loss(net.params().data(), batch, loss, margin, grad_w.data());
    std::copy(grad_w.begin(), grad_w.end(), grad.begin());
    return value;
  }

  const auto params = net.params();
  AlignedBuffer eff;
  const double* w = params.data();
  if (noise) {
    eff = effective_weights(net, *noise);
    w = eff.data();
  }
  double value = engine.loss(w, batch, loss, margin, grad_w.data());
  // w = mu + softplus(rho) * zeta: dL/dmu = dL/dw, dL/drho = dL/dw * zeta * sigmoid(rho).
  for (const LayerLayout& lay : net.layers()) {
    const std::size_t shift = lay.rho_shift();
    for (std::size_t p = lay.offset; p < lay.offset + lay.mu_count(); ++p) {
      const double rho = params[p + shift];
      const double sigma = softplus(rho);
      grad[p] = grad_w[p] + kl_weight * params[p];
      grad[p + shift] = (noise ? grad_w[p] * (*noise)[p] * sigmoid(rho) : 0.0) +
                        kl_weight * (sigma - 1.0 / sigma) * sigmoid(rho);
    }
  }
  value += kl_weight * network_kl(net);
  return value;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamOptions& options) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DataError("adam_step: shape mismatch");
  }
  state.t += 1;
  const auto c = adam_coeffs(options, state.t);
  kernels::adam(params.data(), grads.data(), state.m.data(), state.v.data(), params.size(), c);
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation fraction must lie in (0, 1)");
  }
  if (!(margin >= 0.0)) throw ConfigError("ranking margin must be non-negative");
  if (max_epochs == 0) throw ConfigError("max epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (mc_samples_train == 0) throw ConfigError("mc_samples_train must be positive");
  if (pair_multiplier == 0) throw ConfigError("pair multiplier must be positive");
  if (kl_weight && !(*kl_weight >= 0.0)) throw ConfigError("kl_weight must be non-negative");
}

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::kMaxEpochs: return "max_epochs";
    case StopReason::kEarlyStopping: return "early_stopping";
    case StopReason::kNoValidation: return "no_validation";
  }
  return "unknown";
}

double evaluate_loss(const Network& net, std::span<const FeatureRow> rows, std::span<const double> targets,
                     std::span<const std::size_t> points, std::span<const data::Pair> pairs, LossKind loss,
                     double margin) {
  Engine engine(net);
  const Batch batch{rows, targets, points, pairs};
  return engine.loss(net.params().data(), batch, loss, margin, nullptr);
}

namespace {

// Replays the prior-only Adam trajectory of the lazy first-layer rows.
void materialize_lazy_rows(Network& net, std::span<const std::uint32_t> lazy_rows, double kl_weight,
                           std::span<const kernels::AdamCoeffs> coeffs) {
  if (coeffs.empty() || lazy_rows.empty()) return;
  const LayerLayout& first = net.layers().front();
  auto params = net.params();
  for (std::uint32_t r : lazy_rows) {
    kernels::replay_prior_mu(params.data() + first.weight(r, 0), first.out, kl_weight, coeffs.data(),
                             coeffs.size());
  }
  // Rho trajectories depend only on the starting value, which is usually
  // shared by every lazy weight; replay each distinct start once.
  std::vector<double> starts;
  for (std::uint32_t r : lazy_rows) {
    const double* rho = params.data() + first.weight(r, 0) + first.rho_shift();
    starts.insert(starts.end(), rho, rho + first.out);
  }
  std::sort(starts.begin(), starts.end());
  starts.erase(std::unique(starts.begin(), starts.end()), starts.end());
  std::vector<double> ends = starts;
  kernels::replay_prior_rho(ends.data(), ends.size(), kl_weight, coeffs.data(), coeffs.size());
  for (std::uint32_t r : lazy_rows) {
    double* rho = params.data() + first.weight(r, 0) + first.rho_shift();
    for (std::size_t j = 0; j < first.out; ++j) {
      const auto at = std::lower_bound(starts.begin(), starts.end(), rho[j]) - starts.begin();
      rho[j] = ends[static_cast<std::size_t>(at)];
    }
  }
}

}  // namespace

TrainResult train(Network network, std::span<const FeatureRow> rows, std::span<const double> targets,
                  const TrainConfig& config, Rng& rng) {
  config.validate();
  if (rows.size() != targets.size()) throw DataError("train: feature/target length mismatch");
  if (rows.size() < 2) throw DataError("train: need at least two training rows");
  for (const FeatureRow& row : rows) check_row(network, row);
  for (double y : targets) {
    if (!std::isfinite(y)) throw DataError("train: non-finite target");
  }

  const bool ranking = config.loss == LossKind::kRanking;
  const std::size_t n = rows.size();
  const std::size_t min_val = ranking ? 2 : 1;
  std::size_t n_val = std::max<std::size_t>(
      min_val, static_cast<std::size_t>(std::llround(config.validation_fraction * static_cast<double>(n))));
  if (n < n_val + 2) n_val = 0;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, rng);
  std::vector<std::size_t> val_points(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_points(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val_points.begin(), val_points.end());
  std::sort(train_points.begin(), train_points.end());

  std::vector<data::Pair> train_pairs, val_pairs;
  if (ranking) {
    train_pairs = data::sample_pairs(train_points, config.pair_multiplier, rng());
    if (n_val > 0) val_pairs = data::sample_pairs(val_points, config.pair_multiplier, rng());
  }

  TrainReport report;
  report.train_size = train_points.size();
  report.validation_size = n_val;

  const std::size_t n_items = ranking ? train_pairs.size() : train_points.size();
  const std::size_t n_batches = (n_items + config.batch_size - 1) / config.batch_size;
  const double kl_weight = config.kl_weight.value_or(1.0 / static_cast<double>(n_batches));
  const bool variational = network.variational();
  const std::size_t param_count = network.param_count();

  Engine engine(network);
  auto validation_loss = [&](const Network& net) {
    const Batch batch{rows, targets, val_points, val_pairs};
    return engine.loss(net.params().data(), batch, config.loss, config.margin, nullptr);
  };

  // Rows outside `eager` receive no data gradient in this fit.
  ActiveRows active(network.spec().input_dim);
  std::vector<std::uint32_t> eager, lazy;
  if (config.lazy_prior_rows) {
    eager = active.collect([&](auto&& visit) {
      for (const FeatureRow& row : rows) visit(row);
    });
    std::size_t k = 0;
    for (std::uint32_t r = 0; r < network.spec().input_dim; ++r) {
      if (k < eager.size() && eager[k] == r) {
        ++k;
      } else {
        lazy.push_back(r);
      }
    }
  } else {
    eager.resize(network.spec().input_dim);
    std::iota(eager.begin(), eager.end(), 0u);
  }
  const std::vector<SlotRange> sweep = slot_ranges(network, eager);

  AdamState adam(param_count);
  AdamOptions adam_options;
  adam_options.learning_rate = config.learning_rate;
  std::vector<kernels::AdamCoeffs> coeffs;
  AlignedBuffer grad(param_count, 0.0), grad_w, eff;
  std::vector<double> zeta, sigma, slope, normals;
  if (variational) {
    grad_w.assign(param_count, 0.0);
    zeta.assign(param_count, 0.0);
    eff.assign(network.params().begin(), network.params().end());
    sigma.assign(param_count, 0.0);
    slope.assign(param_count, 0.0);
    refresh_sigma(network.params(), sweep, sigma, slope);
  }

  Network best = network;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t best_step = 0;
  if (n_val > 0) {
    best_loss = validation_loss(network);
    report.initial_validation_loss = best_loss;
  }

  std::vector<std::size_t> item_order(n_items);
  std::iota(item_order.begin(), item_order.end(), 0);
  std::vector<std::size_t> batch_points;
  std::vector<data::Pair> batch_pairs;
  const double inv_samples = 1.0 / static_cast<double>(config.mc_samples_train);
  std::size_t wait = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    if (ranking && config.resample_pairs_each_epoch && epoch > 1) {
      train_pairs = data::sample_pairs(train_points, config.pair_multiplier, rng());
    }
    shuffle(item_order, rng);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < n_batches; ++b) {
      const std::size_t lo = b * config.batch_size;
      const std::size_t hi = std::min(n_items, lo + config.batch_size);
      batch_points.clear();
      batch_pairs.clear();
      for (std::size_t k = lo; k < hi; ++k) {
        if (ranking) {
          batch_pairs.push_back(train_pairs[item_order[k]]);
        } else {
          batch_points.push_back(train_points[item_order[k]]);
        }
      }
      const Batch batch{rows, targets, batch_points, batch_pairs};
      double loss = 0.0;
      if (!variational) {
        loss = engine.loss(network.params().data(), batch, config.loss, config.margin, grad.data());
      } else {
        const auto& touched = active.collect([&](auto&& visit) {
          for (std::size_t p : batch_points) visit(rows[p]);
          for (const data::Pair& pr : batch_pairs) {
            visit(rows[pr.i]);
            visit(rows[pr.j]);
          }
        });
        const auto drawn = slot_ranges(network, touched);
        for (std::size_t s = 0; s < config.mc_samples_train; ++s) {
          draw(network.params(), drawn, sigma, rng, normals, zeta.data(), eff.data());
          for (const SlotRange& r : drawn) std::fill(grad_w.begin() + r.begin, grad_w.begin() + r.end, 0.0);
          loss += inv_samples * engine.loss(eff.data(), batch, config.loss, config.margin, grad_w.data());
          for (const SlotRange& r : drawn) {
            for (std::size_t p = r.begin; p < r.end; ++p) {
              grad[p] += inv_samples * grad_w[p];
              grad[p + r.shift] += inv_samples * grad_w[p] * zeta[p] * slope[p];
            }
          }
        }
      }
      if (!std::isfinite(loss)) {
        throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch));
      }
      epoch_loss += loss;

      adam.t += 1;
      coeffs.push_back(adam_coeffs(adam_options, adam.t));
      const kernels::AdamCoeffs& c = coeffs.back();
      double* p = network.params().data();
      for (const SlotRange& r : sweep) {
        const std::size_t len = r.end - r.begin;
        if (variational) {
          const std::size_t q = r.begin + r.shift;
          kernels::adam_variational(p + r.begin, p + q, grad.data() + r.begin, grad.data() + q,
                                    adam.m.data() + r.begin, adam.m.data() + q, adam.v.data() + r.begin,
                                    adam.v.data() + q, sigma.data() + r.begin, slope.data() + r.begin, len,
                                    kl_weight, c);
        } else {
          kernels::adam(p + r.begin, grad.data() + r.begin, adam.m.data() + r.begin, adam.v.data() + r.begin, len,
                        c);
          std::fill(grad.begin() + static_cast<std::ptrdiff_t>(r.begin),
                    grad.begin() + static_cast<std::ptrdiff_t>(r.end), 0.0);
        }
      }
    }
    report.train_loss.push_back(epoch_loss / static_cast<double>(n_batches));
    report.epochs_run = epoch;

    if (n_val == 0) continue;
    const double val = validation_loss(network);
    if (!std::isfinite(val)) {
      throw NumericalError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    report.validation_loss.push_back(val);
    if (val < best_loss) {
      best_loss = val;
      best = network;
      best_step = adam.t;
      report.best_epoch = epoch;
      wait = 0;
    } else if (++wait >= config.patience) {
      report.stop_reason = StopReason::kEarlyStopping;
      break;
    }
  }

  if (n_val == 0) {
    report.stop_reason = StopReason::kNoValidation;
    report.best_epoch = report.epochs_run;
    best = std::move(network);
    best_step = adam.t;
  } else {
    report.best_validation_loss = best_loss;
  }
  // Dense lazy rows never move (zero gradient, zero moments); variational ones follow the prior.
  if (variational) materialize_lazy_rows(best, lazy, kl_weight, std::span(coeffs).first(best_step));
  return {std::move(best), std::move(report)};
}

// ---------------------------------------------------------------------------

PredDist predict(const Network& net, std::span<const FeatureRow> rows, std::size_t mc_samples, Rng& rng) {
  if (mc_samples == 0) throw ConfigError("mc_samples must be at least 1");
  for (const FeatureRow& row : rows) check_row(net, row);
  PredDist out;
  out.mean.assign(rows.size(), 0.0);
  out.std.assign(rows.size(), 0.0);
  Engine engine(net);
  std::vector<std::size_t> ids;

  auto run_chunks = [&](const double* w, auto&& consume) {
    for (std::size_t lo = 0; lo < rows.size(); lo += kPredictChunk) {
      const std::size_t hi = std::min(rows.size(), lo + kPredictChunk);
      ids.resize(hi - lo);
      std::iota(ids.begin(), ids.end(), lo);
      const auto y = engine.forward(w, rows, ids);
      for (std::size_t k = 0; k < y.size(); ++k) consume(lo + k, y[k]);
    }
  };

  if (!net.variational()) {
    run_chunks(net.params().data(), [&](std::size_t i, double y) { out.mean[i] = y; });
    return out;
  }

  ActiveRows active(net.spec().input_dim);
  const auto& touched = active.collect([&](auto&& visit) {
    for (const FeatureRow& row : rows) visit(row);
  });
  const auto ranges = slot_ranges(net, touched);
  std::vector<double> sigma(net.param_count(), 0.0), slope(net.param_count(), 0.0);
  refresh_sigma(net.params(), ranges, sigma, slope);
  std::vector<double> zeta(net.param_count(), 0.0);
  AlignedBuffer eff(net.params().begin(), net.params().end());
  std::vector<double> normals;
  // Welford accumulation per row.
  std::vector<double> m2(rows.size(), 0.0);
  for (std::size_t s = 0; s < mc_samples; ++s) {
    draw(net.params(), ranges, sigma, rng, normals, zeta.data(), eff.data());
    const double count = static_cast<double>(s + 1);
    run_chunks(eff.data(), [&](std::size_t i, double y) {
      const double d = y - out.mean[i];
      out.mean[i] += d / count;
      m2[i] += d * (y - out.mean[i]);
    });
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.std[i] = std::sqrt(std::max(0.0, m2[i] / static_cast<double>(mc_samples)));
  }
  return out;
}

}  // namespace rbo::neural
