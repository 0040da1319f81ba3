#pragma once

// Dense MLP with a derivative engine: exact input derivatives up to the
// Laplacian, propagated layer by layer alongside the values, plus
// reverse-mode parameter gradients of any scalar loss built from those
// derivatives. All computation is batched over points (columns).

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "bpinn/common.hpp"

namespace bpinn {

enum class ActivationKind { tanh, sigmoid };

inline std::string to_string(ActivationKind a) {
  return a == ActivationKind::tanh ? "tanh" : "sigmoid";
}

inline ActivationKind activation_from_string(const std::string& s) {
  if (s == "tanh") return ActivationKind::tanh;
  if (s == "sigmoid") return ActivationKind::sigmoid;
  throw InvalidInput("unknown activation: " + s);
}

/// Optional fixed feature map applied to the raw input before the first
/// dense layer. `periodic` maps each spatial coordinate to a sin/cos pair,
/// making the network exactly periodic over the box.
enum class InputEmbedding { none, periodic };

struct MlpParams {
  std::vector<MatrixXd> weights;  // out_dim x in_dim
  std::vector<VectorXd> biases;   // out_dim
  ActivationKind activation = ActivationKind::tanh;
  InputEmbedding embedding = InputEmbedding::none;
  // Raw input dimension (d, or d+1 with time). Equals weights[0].cols()
  // unless an embedding is active.
  int raw_input_dim = 0;
  // Box geometry for the periodic embedding (spatial coordinates only).
  VectorXd embed_lo, embed_width;

  int input_dim() const { return raw_input_dim; }
  int layer_count() const { return static_cast<int>(weights.size()); }
};

/// Value and input derivatives of the network at one point.
struct DerivativeBundle {
  double value = 0.0;
  VectorXd grad_x;            // length d
  double laplacian = 0.0;     // sum of pure second spatial derivatives
  std::optional<double> du_dt;  // absent for stationary input
};

/// Gradient of a scalar loss with respect to every weight and bias.
struct ParamGradient {
  std::vector<MatrixXd> weights;
  std::vector<VectorXd> biases;
};

inline ParamGradient zero_gradient(const MlpParams& p) {
  ParamGradient g;
  g.weights.reserve(p.weights.size());
  g.biases.reserve(p.biases.size());
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    g.weights.push_back(MatrixXd::Zero(p.weights[l].rows(), p.weights[l].cols()));
    g.biases.push_back(VectorXd::Zero(p.biases[l].size()));
  }
  return g;
}

// ---------------------------------------------------------------------------
// Initialization

inline MlpParams init_network(const std::vector<int>& layer_sizes,
                              ActivationKind activation, std::uint64_t seed,
                              InputEmbedding embedding = InputEmbedding::none,
                              const VectorXd& embed_lo = VectorXd(),
                              const VectorXd& embed_hi = VectorXd()) {
  if (layer_sizes.size() < 2)
    throw InvalidInput("invalid architecture: need at least input and output sizes");
  for (int s : layer_sizes)
    if (s <= 0) throw InvalidInput("invalid architecture: non-positive layer size");
  if (layer_sizes.back() != 1)
    throw InvalidInput("invalid architecture: output dimension must be 1");

  MlpParams p;
  p.activation = activation;
  p.embedding = embedding;
  if (embedding == InputEmbedding::periodic) {
    const int d = static_cast<int>(embed_lo.size());
    if (d == 0 || embed_hi.size() != d)
      throw InvalidInput("periodic embedding requires box bounds");
    // First dense layer consumes (sin, cos) per spatial coordinate plus any
    // trailing passthrough coordinates (time).
    if (layer_sizes.front() < 2 * d)
      throw InvalidInput("invalid architecture: first size too small for embedding");
    p.raw_input_dim = layer_sizes.front() - d;  // 2d + extras - d
    p.embed_lo = embed_lo;
    p.embed_width = embed_hi - embed_lo;
  } else {
    p.raw_input_dim = layer_sizes.front();
  }

  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int in = layer_sizes[l], out = layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    MatrixXd w(out, in);
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) w(r, c) = dist(rng);
    p.weights.push_back(std::move(w));
    p.biases.push_back(VectorXd::Zero(out));
  }
  return p;
}

// ---------------------------------------------------------------------------
// Activation derivatives, expressed through the post-activation value a.

namespace detail {

struct ActDerivs {
  MatrixXd s1, s2, s3;  // sigma', sigma'', sigma''' evaluated at z
};

inline ActDerivs act_derivs(ActivationKind kind, const MatrixXd& a) {
  ActDerivs d;
  if (kind == ActivationKind::tanh) {
    d.s1 = 1.0 - a.array().square();
    d.s2 = -2.0 * a.array() * d.s1.array();
    d.s3 = -2.0 * d.s1.array() * (1.0 - 3.0 * a.array().square());
  } else {
    const auto aa = a.array();
    d.s1 = aa * (1.0 - aa);
    d.s2 = d.s1.array() * (1.0 - 2.0 * aa);
    d.s3 = d.s1.array() * (1.0 - 6.0 * aa + 6.0 * aa.square());
  }
  return d;
}

inline MatrixXd apply_activation(ActivationKind kind, const MatrixXd& z) {
  if (kind == ActivationKind::tanh) return z.array().tanh();
  return 1.0 / (1.0 + (-z.array()).exp());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Batched forward/backward engine

/// Bundles for a batch of points (one column per point).
struct BatchBundles {
  RowVectorXd value;
  MatrixXd grad;         // d x N
  RowVectorXd laplacian;
  RowVectorXd du_dt;     // empty when no time coordinate is tracked
};

/// Cotangents (loss sensitivities) matching BatchBundles shapes.
struct BatchCotangents {
  RowVectorXd value;
  MatrixXd grad;
  RowVectorXd laplacian;
  RowVectorXd du_dt;
};

/// Forward tape. stage[k] holds the post-activation output of layer k-1
/// (stage[0] is the embedded input) together with its per-input-coordinate
/// Jacobian rows j[i] and pure second derivatives h[i] (spatial i only).
/// pre[l] holds the same quantities at layer l's pre-activation.
struct Tape {
  struct Stage {
    MatrixXd a;
    std::vector<MatrixXd> j;  // input_dim entries
    std::vector<MatrixXd> h;  // spatial_dim entries
  };
  std::vector<Stage> stages;
  std::vector<Stage> pre;  // pre-activation (a = z), per dense layer
  int spatial_dim = 0;
  int n_points = 0;
};

namespace detail {

/// Builds the input stage: identity passthrough or the periodic sin/cos map.
inline Tape::Stage input_stage(const MlpParams& p, const MatrixXd& x, int spatial_dim) {
  const int n0 = p.raw_input_dim;
  const auto n = x.cols();
  Tape::Stage s;
  if (p.embedding == InputEmbedding::none) {
    s.a = x;
    for (int i = 0; i < n0; ++i) {
      MatrixXd ji = MatrixXd::Zero(n0, n);
      ji.row(i).setOnes();
      s.j.push_back(std::move(ji));
    }
    for (int i = 0; i < spatial_dim; ++i) s.h.push_back(MatrixXd::Zero(n0, n));
  } else {
    const int d = static_cast<int>(p.embed_lo.size());
    const int k = 2 * d + (n0 - d);  // embedded dimension
    s.a.resize(k, n);
    for (int i = 0; i < n0; ++i) s.j.push_back(MatrixXd::Zero(k, n));
    for (int i = 0; i < spatial_dim; ++i) s.h.push_back(MatrixXd::Zero(k, n));
    for (int i = 0; i < d; ++i) {
      const double w = 2.0 * M_PI / p.embed_width(i);
      Eigen::ArrayXXd phase = w * (x.row(i).array() - p.embed_lo(i));
      Eigen::ArrayXXd sn = phase.sin(), cs = phase.cos();
      s.a.row(2 * i) = sn;
      s.a.row(2 * i + 1) = cs;
      s.j[i].row(2 * i) = w * cs;
      s.j[i].row(2 * i + 1) = -w * sn;
      if (i < spatial_dim) {
        s.h[i].row(2 * i) = -w * w * sn;
        s.h[i].row(2 * i + 1) = -w * w * cs;
      }
    }
    for (int i = d; i < n0; ++i) {  // passthrough coordinates (time)
      s.a.row(d + i) = x.row(i);
      s.j[i].row(d + i).setOnes();
    }
  }
  return s;
}

}  // namespace detail

/// Forward pass over a batch of points X (input_dim x N). Computes value,
/// spatial gradient, Laplacian and (when input_dim > spatial_dim) the time
/// derivative for every column. When `tape` is non-null, stores everything
/// needed for backward_bundles().
inline BatchBundles forward_bundles(const MlpParams& p, const MatrixXd& x,
                                    int spatial_dim, Tape* tape = nullptr) {
  if (x.rows() != p.raw_input_dim)
    throw InvalidInput("input dimension mismatch: got " + std::to_string(x.rows()) +
                       ", network expects " + std::to_string(p.raw_input_dim));
  if (spatial_dim < 1 || spatial_dim > p.raw_input_dim)
    throw InvalidInput("spatial_dim out of range");
  const int n0 = p.raw_input_dim;
  const int d = spatial_dim;
  const int nlayers = p.layer_count();
  const bool track_time = n0 > d;

  Tape::Stage cur = detail::input_stage(p, x, d);
  if (tape) {
    tape->stages.clear();
    tape->pre.clear();
    tape->spatial_dim = d;
    tape->n_points = static_cast<int>(x.cols());
  }

  for (int l = 0; l < nlayers; ++l) {
    const MatrixXd& w = p.weights[l];
    Tape::Stage nxt;
    nxt.a = (w * cur.a).colwise() + p.biases[l];
    nxt.j.reserve(n0);
    nxt.h.reserve(d);
    for (int i = 0; i < n0; ++i) nxt.j.push_back(w * cur.j[i]);
    for (int i = 0; i < d; ++i) nxt.h.push_back(w * cur.h[i]);
    if (tape) tape->stages.push_back(std::move(cur));

    if (l + 1 < nlayers) {
      Tape::Stage post;
      post.a = detail::apply_activation(p.activation, nxt.a);
      const auto ad = detail::act_derivs(p.activation, post.a);
      post.j.reserve(n0);
      post.h.reserve(d);
      for (int i = 0; i < n0; ++i)
        post.j.push_back(ad.s1.cwiseProduct(nxt.j[i]));
      for (int i = 0; i < d; ++i)
        post.h.push_back(ad.s2.cwiseProduct(nxt.j[i].cwiseProduct(nxt.j[i])) +
                         ad.s1.cwiseProduct(nxt.h[i]));
      if (tape) {
        tape->pre.push_back(std::move(nxt));
        cur = std::move(post);
      } else {
        cur = std::move(post);
      }
    } else {
      cur = std::move(nxt);
      if (tape) tape->pre.push_back(Tape::Stage{});  // unused for last layer
    }
  }

  BatchBundles out;
  out.value = cur.a.row(0);
  out.grad.resize(d, x.cols());
  for (int i = 0; i < d; ++i) out.grad.row(i) = cur.j[i].row(0);
  out.laplacian = RowVectorXd::Zero(x.cols());
  for (int i = 0; i < d; ++i) out.laplacian += cur.h[i].row(0);
  if (track_time) out.du_dt = cur.j[d].row(0);
  return out;
}

/// Reverse accumulation through the extended forward computation: given
/// cotangents on (value, grad, laplacian, du_dt) per point, returns the
/// gradient with respect to every weight and bias.
inline ParamGradient backward_bundles(const MlpParams& p, const Tape& tape,
                                      const BatchCotangents& cot) {
  const int n0 = p.raw_input_dim;
  const int d = tape.spatial_dim;
  const int nlayers = p.layer_count();
  const bool track_time = n0 > d;
  ParamGradient grad = zero_gradient(p);
  if (tape.n_points == 0) return grad;

  // Seed cotangents at the network output (the last pre-activation).
  RowVectorXd zbar = cot.value;
  std::vector<RowVectorXd> jbar(n0), hbar(d);
  for (int i = 0; i < d; ++i) jbar[i] = cot.grad.row(i);
  if (track_time) jbar[d] = cot.du_dt;
  for (int i = 0; i < d; ++i) hbar[i] = cot.laplacian;

  // Cotangents are rank-1 at the output; they widen to full matrices after
  // the first transposed multiply.
  std::vector<MatrixXd> jbar_m(n0), hbar_m(d);
  MatrixXd zbar_m = zbar;
  for (int i = 0; i < n0; ++i) jbar_m[i] = jbar[i];
  for (int i = 0; i < d; ++i) hbar_m[i] = hbar[i];

  for (int l = nlayers - 1; l >= 0; --l) {
    const MatrixXd& w = p.weights[l];
    const Tape::Stage& in = tape.stages[l];

    grad.weights[l].noalias() += zbar_m * in.a.transpose();
    grad.biases[l] += zbar_m.rowwise().sum();
    for (int i = 0; i < n0; ++i)
      grad.weights[l].noalias() += jbar_m[i] * in.j[i].transpose();
    for (int i = 0; i < d; ++i)
      grad.weights[l].noalias() += hbar_m[i] * in.h[i].transpose();
    if (l == 0) break;

    MatrixXd abar = w.transpose() * zbar_m;
    std::vector<MatrixXd> jabar(n0), habar(d);
    for (int i = 0; i < n0; ++i) jabar[i] = w.transpose() * jbar_m[i];
    for (int i = 0; i < d; ++i) habar[i] = w.transpose() * hbar_m[i];

    // Reverse through the activation of layer l-1. Its post-activation value
    // is this layer's input; its pre-activation jacobians are on the tape.
    const auto ad = detail::act_derivs(p.activation, in.a);
    const Tape::Stage& pre = tape.pre[l - 1];

    MatrixXd znew = ad.s1.cwiseProduct(abar);
    for (int i = 0; i < n0; ++i)
      znew += ad.s2.cwiseProduct(jabar[i].cwiseProduct(pre.j[i]));
    for (int i = 0; i < d; ++i)
      znew += habar[i].cwiseProduct(
          ad.s3.cwiseProduct(pre.j[i].cwiseProduct(pre.j[i])) +
          ad.s2.cwiseProduct(pre.h[i]));
    for (int i = 0; i < n0; ++i) {
      MatrixXd jnew = ad.s1.cwiseProduct(jabar[i]);
      if (i < d)
        jnew += 2.0 * ad.s2.cwiseProduct(pre.j[i]).cwiseProduct(habar[i]);
      jbar_m[i] = std::move(jnew);
    }
    for (int i = 0; i < d; ++i) hbar_m[i] = ad.s1.cwiseProduct(habar[i]);
    zbar_m = std::move(znew);
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Point-wise API

/// Plain forward evaluation (no derivative tracking).
inline double forward(const MlpParams& p, const VectorXd& x) {
  if (x.size() != p.raw_input_dim)
    throw InvalidInput("input dimension mismatch in forward()");
  MatrixXd xm = x;
  Tape::Stage s = detail::input_stage(p, xm, 1);
  MatrixXd a = std::move(s.a);
  const int nlayers = p.layer_count();
  for (int l = 0; l < nlayers; ++l) {
    a = (p.weights[l] * a).colwise() + p.biases[l];
    if (l + 1 < nlayers) a = detail::apply_activation(p.activation, a);
  }
  return a(0, 0);
}

/// Value, spatial gradient, Laplacian and (when the last coordinate is time)
/// time derivative at a single point. Spatial coordinates come first; set
/// `time_dependent` when the final coordinate is time.
inline DerivativeBundle derivatives(const MlpParams& p, const VectorXd& x,
                                    bool time_dependent = false) {
  const int d = p.raw_input_dim - (time_dependent ? 1 : 0);
  BatchBundles b = forward_bundles(p, x, d);
  DerivativeBundle out;
  out.value = b.value(0);
  out.grad_x = b.grad.col(0);
  out.laplacian = b.laplacian(0);
  if (time_dependent) out.du_dt = b.du_dt(0);
  return out;
}

/// Reverse-mode gradient of a scalar loss over the bundles at a point set.
/// The loss functor receives the batch bundles, fills the (pre-zeroed)
/// cotangents with its sensitivities, and returns the loss value.
template <class LossFn>
std::pair<double, ParamGradient> loss_gradient(const MlpParams& p,
                                               const MatrixXd& x,
                                               int spatial_dim, LossFn&& fn) {
  Tape tape;
  BatchBundles b = forward_bundles(p, x, spatial_dim, &tape);
  const auto n = x.cols();
  BatchCotangents cot;
  cot.value = RowVectorXd::Zero(n);
  cot.grad = MatrixXd::Zero(spatial_dim, n);
  cot.laplacian = RowVectorXd::Zero(n);
  cot.du_dt = RowVectorXd::Zero(n);
  const double loss = fn(static_cast<const BatchBundles&>(b), cot);
  if (!std::isfinite(loss)) throw NumericalFailure("non-finite loss value");
  return {loss, backward_bundles(p, tape, cot)};
}

// ---------------------------------------------------------------------------
// Flattening (for vector-space optimizers)

inline int param_count(const MlpParams& p) {
  int n = 0;
  for (std::size_t l = 0; l < p.weights.size(); ++l)
    n += static_cast<int>(p.weights[l].size() + p.biases[l].size());
  return n;
}

inline VectorXd flatten(const std::vector<MatrixXd>& ws, const std::vector<VectorXd>& bs) {
  int n = 0;
  for (std::size_t l = 0; l < ws.size(); ++l)
    n += static_cast<int>(ws[l].size() + bs[l].size());
  VectorXd v(n);
  int k = 0;
  for (std::size_t l = 0; l < ws.size(); ++l) {
    for (int r = 0; r < ws[l].rows(); ++r)
      for (int c = 0; c < ws[l].cols(); ++c) v(k++) = ws[l](r, c);
    for (int r = 0; r < bs[l].size(); ++r) v(k++) = bs[l](r);
  }
  return v;
}

inline VectorXd flatten(const MlpParams& p) { return flatten(p.weights, p.biases); }
inline VectorXd flatten(const ParamGradient& g) { return flatten(g.weights, g.biases); }

inline void unflatten_into(const VectorXd& v, MlpParams& p) {
  int k = 0;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    for (int r = 0; r < p.weights[l].rows(); ++r)
      for (int c = 0; c < p.weights[l].cols(); ++c) p.weights[l](r, c) = v(k++);
    for (int r = 0; r < p.biases[l].size(); ++r) p.biases[l](r) = v(k++);
  }
  if (k != v.size()) throw InvalidInput("flat parameter vector size mismatch");
}

// ---------------------------------------------------------------------------
// Checkpoint format: a text header "layers: s0 s1 ... sn; activation: <name>"
// followed by all weights then biases, layer by layer, row-major, one value
// per line with 17 significant digits.

inline std::string save_checkpoint(const MlpParams& p) {
  std::ostringstream out;
  out << "layers:";
  out << ' ' << p.weights.front().cols();
  for (std::size_t l = 0; l < p.weights.size(); ++l) out << ' ' << p.weights[l].rows();
  out << "; activation: " << to_string(p.activation);
  if (p.embedding == InputEmbedding::periodic) {
    out << "; embedding: periodic";
    out << "\nbox:";
    for (int i = 0; i < p.embed_lo.size(); ++i)
      out << ' ' << format_g17(p.embed_lo(i)) << ' '
          << format_g17(p.embed_lo(i) + p.embed_width(i));
  }
  out << '\n';
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    for (int r = 0; r < p.weights[l].rows(); ++r)
      for (int c = 0; c < p.weights[l].cols(); ++c)
        out << format_g17(p.weights[l](r, c)) << '\n';
    for (int r = 0; r < p.biases[l].size(); ++r)
      out << format_g17(p.biases[l](r)) << '\n';
  }
  return out.str();
}

inline MlpParams load_checkpoint(const std::string& text) {
  std::istringstream in(text);
  std::string header;
  if (!std::getline(in, header)) throw IoError("empty checkpoint");
  if (header.rfind("layers:", 0) != 0) throw IoError("bad checkpoint header");

  std::vector<int> sizes;
  std::string rest = header.substr(7);
  auto semi = rest.find(';');
  if (semi == std::string::npos) throw IoError("bad checkpoint header");
  {
    std::istringstream ss(rest.substr(0, semi));
    int s;
    while (ss >> s) sizes.push_back(s);
  }
  std::string tail = rest.substr(semi + 1);
  auto act_pos = tail.find("activation:");
  if (act_pos == std::string::npos) throw IoError("bad checkpoint header");
  std::istringstream ts(tail.substr(act_pos + 11));
  std::string act_name;
  ts >> act_name;
  if (!act_name.empty() && act_name.back() == ';') act_name.pop_back();

  MlpParams p;
  p.activation = activation_from_string(act_name);
  if (tail.find("embedding: periodic") != std::string::npos) {
    p.embedding = InputEmbedding::periodic;
    std::string box_line;
    if (!std::getline(in, box_line) || box_line.rfind("box:", 0) != 0)
      throw IoError("missing box line for periodic checkpoint");
    std::istringstream bs(box_line.substr(4));
    std::vector<double> vals;
    double v;
    while (bs >> v) vals.push_back(v);
    const int d = static_cast<int>(vals.size() / 2);
    p.embed_lo.resize(d);
    p.embed_width.resize(d);
    for (int i = 0; i < d; ++i) {
      p.embed_lo(i) = vals[2 * i];
      p.embed_width(i) = vals[2 * i + 1] - vals[2 * i];
    }
    p.raw_input_dim = sizes.front() - d;
  } else {
    p.raw_input_dim = sizes.front();
  }

  if (sizes.size() < 2) throw IoError("bad checkpoint layer sizes");
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    MatrixXd w(sizes[l + 1], sizes[l]);
    for (int r = 0; r < w.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c)
        if (!(in >> w(r, c))) throw IoError("truncated checkpoint (weights)");
    VectorXd b(sizes[l + 1]);
    for (int r = 0; r < b.size(); ++r)
      if (!(in >> b(r))) throw IoError("truncated checkpoint (biases)");
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  return p;
}

}  // namespace bpinn
