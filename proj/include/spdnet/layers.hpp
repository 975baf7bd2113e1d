#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "spdnet/optim.hpp"

namespace spdnet {

// ---------------------------------------------------------------------------
// Layers of the SPD network. A block is BiMap -> (RBN) -> ReEig; the stack of
// blocks is closed off by LogEig -> dense head -> softmax cross-entropy.
// Every backward pass consumes the caches produced by the matching forward.
// ---------------------------------------------------------------------------

/// Row-major flattening of a square matrix (and its inverse), used by LogEig.
inline Vector vec_rowmajor(const Matrix& m) {
  Vector v(m.rows() * m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) v(i * m.cols() + j) = m(i, j);
  }
  return v;
}

inline Matrix unvec_rowmajor(const Vector& v, Eigen::Index n) {
  if (v.size() != n * n) throw InvalidInput("unvec_rowmajor: size mismatch");
  Matrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = v(i * n + j);
  }
  return m;
}

// ---------------------------------------------------------------------------
// BiMap: X = W^T P W with semi-orthogonal W (n_in x n_out, n_out <= n_in).
// ---------------------------------------------------------------------------

class BiMapLayer {
 public:
  explicit BiMapLayer(Matrix weight) { set_weight(std::move(weight)); }

  static BiMapLayer random(Eigen::Index n_in, Eigen::Index n_out, std::uint64_t seed) {
    return BiMapLayer(random_semi_orthogonal(n_in, n_out, seed));
  }

  const Matrix& weight() const { return weight_; }
  Eigen::Index in_dim() const { return weight_.rows(); }
  Eigen::Index out_dim() const { return weight_.cols(); }

  void set_weight(Matrix weight) {
    if (weight.rows() < weight.cols() || weight.cols() < 1) {
      throw InvalidInput("BiMapLayer: weight must be tall (n_in >= n_out >= 1)");
    }
    const Matrix gram = weight.transpose() * weight;
    const double drift = (gram - Matrix::Identity(weight.cols(), weight.cols())).norm();
    if (!(drift < 1e-8)) {
      throw InvalidInput("BiMapLayer: weight columns are not orthonormal");
    }
    weight_ = std::move(weight);
  }

  std::vector<SPDMatrix> forward(const std::vector<SPDMatrix>& inputs) const {
    std::vector<SPDMatrix> out;
    out.reserve(inputs.size());
    for (const SPDMatrix& p : inputs) {
      if (p.dim() != in_dim()) throw InvalidInput("BiMapLayer: input dim mismatch");
      out.emplace_back(SymMatrix(weight_.transpose() * p.mat() * weight_));
    }
    return out;
  }

  struct Grad {
    Matrix dweight;
    std::vector<SymMatrix> dinputs;
  };

  /// Gradients of sum_i <upstream_i, W^T P_i W> with respect to W and each P_i.
  Grad backward(const std::vector<SPDMatrix>& inputs,
                const std::vector<SymMatrix>& upstream) const {
    if (inputs.size() != upstream.size()) {
      throw InvalidInput("BiMapLayer: cache/upstream size mismatch");
    }
    Grad g;
    g.dweight = Matrix::Zero(in_dim(), out_dim());
    g.dinputs.reserve(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const Matrix& p = inputs[i].mat();
      const Matrix& u = upstream[i].mat();
      if (u.rows() != out_dim()) throw InvalidInput("BiMapLayer: upstream dim mismatch");
      g.dinputs.emplace_back(weight_ * u * weight_.transpose());
      g.dweight += 2.0 * p * weight_ * u;  // P and upstream are symmetric
    }
    return g;
  }

 private:
  Matrix weight_;
};

// ---------------------------------------------------------------------------
// ReEig: clamp eigenvalues from below at eps to restore strict positivity.
// ---------------------------------------------------------------------------

class ReEigLayer {
 public:
  explicit ReEigLayer(double eps = 1e-4) : fun_(ScalarFun::rect(eps)) {}

  double eps() const { return fun_.param(); }

  std::vector<SPDMatrix> forward(const std::vector<SPDMatrix>& inputs,
                                 std::vector<EigDecomposition>* cache = nullptr) const {
    std::vector<SPDMatrix> out;
    out.reserve(inputs.size());
    if (cache) {
      cache->clear();
      cache->reserve(inputs.size());
    }
    for (const SPDMatrix& p : inputs) {
      EigDecomposition eig = sym_eig(p.sym());
      out.emplace_back(spd_fun(eig, fun_));
      if (cache) cache->push_back(std::move(eig));
    }
    return out;
  }

  std::vector<SymMatrix> backward(const std::vector<EigDecomposition>& cache,
                                  const std::vector<SymMatrix>& upstream) const {
    if (cache.size() != upstream.size()) {
      throw InvalidInput("ReEigLayer: cache/upstream size mismatch");
    }
    std::vector<SymMatrix> out;
    out.reserve(cache.size());
    for (std::size_t i = 0; i < cache.size(); ++i) {
      out.push_back(spd_fun_backward(cache[i], fun_, upstream[i]));
    }
    return out;
  }

 private:
  ScalarFun fun_;
};

// ---------------------------------------------------------------------------
// LogEig: matrix logarithm followed by row-major flattening, mapping each SPD
// input to a Euclidean feature row.
// ---------------------------------------------------------------------------

class LogEigLayer {
 public:
  /// Features matrix of shape N x n^2; row i is vec(log(P_i)).
  Matrix forward(const std::vector<SPDMatrix>& inputs,
                 std::vector<EigDecomposition>* cache = nullptr) const {
    if (inputs.empty()) throw InvalidInput("LogEigLayer: empty batch");
    const Eigen::Index n = inputs.front().dim();
    Matrix features(static_cast<Eigen::Index>(inputs.size()), n * n);
    if (cache) {
      cache->clear();
      cache->reserve(inputs.size());
    }
    const ScalarFun fn = ScalarFun::log();
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (inputs[i].dim() != n) throw InvalidInput("LogEigLayer: mixed dims in batch");
      EigDecomposition eig = sym_eig(inputs[i].sym());
      features.row(static_cast<Eigen::Index>(i)) =
          vec_rowmajor(spd_fun(eig, fn).mat()).transpose();
      if (cache) cache->push_back(std::move(eig));
    }
    return features;
  }

  std::vector<SymMatrix> backward(const std::vector<EigDecomposition>& cache,
                                  const Matrix& upstream) const {
    if (cache.empty()) throw InvalidInput("LogEigLayer: empty cache");
    const Eigen::Index n = cache.front().dim();
    if (upstream.rows() != static_cast<Eigen::Index>(cache.size()) ||
        upstream.cols() != n * n) {
      throw InvalidInput("LogEigLayer: upstream shape mismatch");
    }
    const ScalarFun fn = ScalarFun::log();
    std::vector<SymMatrix> out;
    out.reserve(cache.size());
    for (std::size_t i = 0; i < cache.size(); ++i) {
      // Reshaping the row gradient generally yields an asymmetric matrix;
      // symmetrizing it is the adjoint of flattening a symmetric input.
      const SymMatrix g(unvec_rowmajor(upstream.row(static_cast<Eigen::Index>(i)), n));
      out.push_back(spd_fun_backward(cache[i], fn, g));
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Riemannian batch normalization. Training centers the batch at its Karcher
// mean and re-biases it at the learned SPD parameter G:
//   P~_i = G^{1/2} GB^{-1/2} P_i GB^{-1/2} G^{1/2}.
// A running mean tracks the batch means along a geodesic with momentum eta
// and replaces GB at evaluation time.
// ---------------------------------------------------------------------------

struct RBNCache {
  std::vector<SPDMatrix> inputs;
  SPDMatrix anchor;               // batch mean treated as a constant in backward
  EigDecomposition anchor_eig;    // eigensystem of the anchor
  SPDMatrix anchor_invsqrt;       // K = anchor^{-1/2}
  EigDecomposition bias_eig;      // eigensystem of G at forward time
  SPDMatrix bias_sqrt;            // H = G^{1/2}
  bool karcher_converged = true;

  // Populated only when the final Karcher step is unrolled: the anchor then
  // equals S exp(A) S with S = base^{1/2}, A = mean of log(base^{-1/2} P_i
  // base^{-1/2}), and the backward pass differentiates through that step.
  bool unrolled = false;
  SpdSqrtPair base_roots;
  std::vector<EigDecomposition> inner_eigs;
  EigDecomposition tangent_eig;
};

class RBNLayer {
 public:
  RBNLayer(Eigen::Index dim, double eta = 0.9, KarcherConfig karcher = {},
           int unroll_steps = 0)
      : eta_(eta),
        karcher_(karcher),
        unroll_steps_(unroll_steps),
        bias_(SPDMatrix::Identity(dim)),
        running_mean_(SPDMatrix::Identity(dim)) {
    if (dim < 1) throw InvalidInput("RBNLayer: dim must be >= 1");
    if (!(eta > 0.0 && eta < 1.0)) throw InvalidInput("RBNLayer: eta must lie in (0, 1)");
    if (unroll_steps != 0 && unroll_steps != 1) {
      throw InvalidInput("RBNLayer: unroll_steps must be 0 or 1");
    }
    karcher_.validate();
  }

  Eigen::Index dim() const { return bias_.dim(); }
  double eta() const { return eta_; }
  int unroll_steps() const { return unroll_steps_; }
  const SPDMatrix& bias() const { return bias_; }
  const SPDMatrix& running_mean() const { return running_mean_; }

  void set_bias(SPDMatrix g) {
    if (g.dim() != dim()) throw InvalidInput("RBNLayer: bias dim mismatch");
    bias_ = std::move(g);
  }
  void set_running_mean(SPDMatrix g) {
    if (g.dim() != dim()) throw InvalidInput("RBNLayer: running mean dim mismatch");
    running_mean_ = std::move(g);
  }

  /// Training-mode forward. Computes the batch Karcher mean (or reuses
  /// `pinned_anchor`, which exists so a re-run can treat the mean as the
  /// constant it is in the backward pass), advances the running mean unless
  /// told otherwise, and returns the normalized batch.
  std::vector<SPDMatrix> forward_train(const std::vector<SPDMatrix>& inputs,
                                       RBNCache* cache,
                                       const SPDMatrix* pinned_anchor = nullptr,
                                       bool update_running = true) {
    check_batch(inputs);
    bool converged = true;
    SPDMatrix base = SPDMatrix::Identity(dim());
    if (pinned_anchor) {
      base = *pinned_anchor;
    } else {
      KarcherResult res = karcher_mean(inputs, karcher_);
      base = res.mean;
      converged = res.converged;
    }

    SPDMatrix anchor = base;
    SpdSqrtPair base_roots;
    std::vector<EigDecomposition> inner_eigs;
    EigDecomposition tangent_eig;
    if (unroll_steps_ == 1) {
      // Recompute the last flow iteration from the fixed base point so the
      // anchor is an exactly differentiable function of the inputs. The cache
      // pins the base, not the stepped anchor, so a pinned re-run reproduces
      // this forward bit for bit.
      base_roots = spd_sqrt_pair(base);
      const double w = 1.0 / static_cast<double>(inputs.size());
      Matrix tangent = Matrix::Zero(dim(), dim());
      inner_eigs.reserve(inputs.size());
      for (const SPDMatrix& p : inputs) {
        const SymMatrix b(base_roots.invsqrt.mat() * p.mat() * base_roots.invsqrt.mat());
        EigDecomposition eig = sym_eig(b);
        tangent += w * spd_fun(eig, ScalarFun::log()).mat();
        inner_eigs.push_back(std::move(eig));
      }
      tangent_eig = sym_eig(SymMatrix(tangent));
      anchor = SPDMatrix(SymMatrix(base_roots.sqrt.mat() *
                                   spd_fun(tangent_eig, ScalarFun::exp()).mat() *
                                   base_roots.sqrt.mat()));
    }

    if (update_running) {
      running_mean_ = geodesic_barycenter2(running_mean_, anchor, eta_);
    }

    EigDecomposition anchor_eig = sym_eig(anchor.sym());
    const SPDMatrix k(spd_fun(anchor_eig, ScalarFun::invsqrt()));
    EigDecomposition bias_eig = sym_eig(bias_.sym());
    const SPDMatrix h(spd_fun(bias_eig, ScalarFun::sqrt()));

    std::vector<SPDMatrix> out = normalize(inputs, k, h);
    if (cache) {
      cache->inputs = inputs;
      cache->anchor = (unroll_steps_ == 0) ? anchor : base;
      cache->anchor_eig = std::move(anchor_eig);
      cache->anchor_invsqrt = k;
      cache->bias_eig = std::move(bias_eig);
      cache->bias_sqrt = h;
      cache->karcher_converged = converged;
      cache->unrolled = (unroll_steps_ == 1);
      if (cache->unrolled) {
        cache->base_roots = base_roots;
        cache->inner_eigs = std::move(inner_eigs);
        cache->tangent_eig = std::move(tangent_eig);
      }
    }
    return out;
  }

  /// Evaluation-mode forward: center at the running mean, no state updates.
  std::vector<SPDMatrix> forward_eval(const std::vector<SPDMatrix>& inputs) const {
    check_batch(inputs);
    const SPDMatrix k(spd_fun(running_mean_.sym(), ScalarFun::invsqrt()));
    const SPDMatrix h(spd_fun(bias_.sym(), ScalarFun::sqrt()));
    return normalize(inputs, k, h);
  }

  struct Grad {
    Matrix dbias;
    std::vector<SymMatrix> dinputs;
  };

  Grad backward(const RBNCache& cache, const std::vector<SymMatrix>& upstream) const {
    if (cache.inputs.empty()) throw InvalidState("RBNLayer: backward before forward");
    if (cache.inputs.size() != upstream.size()) {
      throw InvalidInput("RBNLayer: cache/upstream size mismatch");
    }
    const Matrix& k = cache.anchor_invsqrt.mat();
    const Matrix& h = cache.bias_sqrt.mat();

    Grad g;
    g.dinputs.reserve(upstream.size());
    Matrix dh_acc = Matrix::Zero(dim(), dim());
    Matrix dk_acc = Matrix::Zero(dim(), dim());
    for (std::size_t i = 0; i < upstream.size(); ++i) {
      const Matrix& u = upstream[i].mat();
      const Matrix& p = cache.inputs[i].mat();
      g.dinputs.emplace_back(k * h * u * h * k);
      const Matrix q = k * p * k;
      dh_acc += q * h * u + u * h * q;
      if (cache.unrolled) dk_acc += h * u * h * k * p + p * k * h * u * h;
    }
    g.dbias = spd_fun_backward(cache.bias_eig, ScalarFun::sqrt(), SymMatrix(dh_acc)).mat();

    if (cache.unrolled) {
      // Chain through anchor = S exp(A) S, A = (1/N) sum log(T P_i T),
      // with S, T the cached square roots of the base point.
      const Matrix& s = cache.base_roots.sqrt.mat();
      const Matrix& t = cache.base_roots.invsqrt.mat();
      const SymMatrix danchor =
          spd_fun_backward(cache.anchor_eig, ScalarFun::invsqrt(), SymMatrix(dk_acc));
      const SymMatrix dexp(s * danchor.mat() * s);
      const SymMatrix dtangent =
          spd_fun_backward(cache.tangent_eig, ScalarFun::exp(), dexp);
      const double w = 1.0 / static_cast<double>(upstream.size());
      for (std::size_t i = 0; i < upstream.size(); ++i) {
        const SymMatrix dinner =
            spd_fun_backward(cache.inner_eigs[i], ScalarFun::log(), dtangent);
        g.dinputs[i] = SymMatrix(g.dinputs[i].mat() + w * t * dinner.mat() * t);
      }
    }
    return g;
  }

 private:
  void check_batch(const std::vector<SPDMatrix>& inputs) const {
    if (inputs.empty()) throw InvalidInput("RBNLayer: empty batch");
    for (const SPDMatrix& p : inputs) {
      if (p.dim() != dim()) throw InvalidInput("RBNLayer: input dim mismatch");
    }
  }

  std::vector<SPDMatrix> normalize(const std::vector<SPDMatrix>& inputs,
                                   const SPDMatrix& k, const SPDMatrix& h) const {
    std::vector<SPDMatrix> out;
    out.reserve(inputs.size());
    const Matrix hk = h.mat() * k.mat();
    for (const SPDMatrix& p : inputs) {
      out.emplace_back(SymMatrix(hk * p.mat() * hk.transpose()));
    }
    return out;
  }

  double eta_;
  KarcherConfig karcher_;
  int unroll_steps_;
  SPDMatrix bias_;
  SPDMatrix running_mean_;
};

// ---------------------------------------------------------------------------
// Dense head and softmax cross-entropy over LogEig features.
// ---------------------------------------------------------------------------

class DenseHead {
 public:
  DenseHead(Eigen::Index num_classes, Eigen::Index feature_dim)
      : weight_(Matrix::Zero(num_classes, feature_dim)), bias_(Vector::Zero(num_classes)) {
    if (num_classes < 2) throw InvalidInput("DenseHead: need at least two classes");
    if (feature_dim < 1) throw InvalidInput("DenseHead: feature_dim must be >= 1");
  }

  static DenseHead random(Eigen::Index num_classes, Eigen::Index feature_dim,
                          std::uint64_t seed) {
    DenseHead head(num_classes, feature_dim);
    Rng rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(feature_dim));
    for (Eigen::Index i = 0; i < num_classes; ++i) {
      for (Eigen::Index j = 0; j < feature_dim; ++j) {
        head.weight_(i, j) = scale * rng.gaussian();
      }
    }
    return head;
  }

  Eigen::Index num_classes() const { return weight_.rows(); }
  Eigen::Index feature_dim() const { return weight_.cols(); }
  const Matrix& weight() const { return weight_; }
  const Vector& bias() const { return bias_; }
  Matrix& mutable_weight() { return weight_; }
  Vector& mutable_bias() { return bias_; }

  void set_params(Matrix weight, Vector bias) {
    if (weight.rows() != bias.size()) throw InvalidInput("DenseHead: shape mismatch");
    if (!weight.allFinite() || !bias.allFinite()) {
      throw InvalidInput("DenseHead: non-finite parameters");
    }
    weight_ = std::move(weight);
    bias_ = std::move(bias);
  }

  /// Logits of shape N x C from features of shape N x d.
  Matrix forward(const Matrix& features) const {
    if (features.cols() != feature_dim()) {
      throw InvalidInput("DenseHead: feature dim mismatch");
    }
    return (features * weight_.transpose()).rowwise() + bias_.transpose();
  }

  struct Grad {
    Matrix dweight;
    Vector dbias;
    Matrix dfeatures;
  };

  Grad backward(const Matrix& features, const Matrix& dlogits) const {
    if (dlogits.rows() != features.rows() || dlogits.cols() != num_classes()) {
      throw InvalidInput("DenseHead: upstream shape mismatch");
    }
    Grad g;
    g.dweight = dlogits.transpose() * features;
    g.dbias = dlogits.colwise().sum().transpose();
    g.dfeatures = dlogits * weight_;
    return g;
  }

 private:
  Matrix weight_;
  Vector bias_;
};

struct XentResult {
  double loss = 0.0;
  Matrix dlogits;  // gradient of the mean loss with respect to the logits
};

/// Mean softmax cross-entropy over the batch, with the usual max-shift for
/// numerical stability. Labels must lie in [0, C).
inline XentResult softmax_xent(const Matrix& logits, const std::vector<int>& labels) {
  const Eigen::Index n = logits.rows();
  const Eigen::Index c = logits.cols();
  if (n < 1 || c < 2) throw InvalidInput("softmax_xent: need N >= 1 and C >= 2");
  if (static_cast<Eigen::Index>(labels.size()) != n) {
    throw InvalidInput("softmax_xent: label count mismatch");
  }
  XentResult res;
  res.dlogits = Matrix::Zero(n, c);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= c) throw InvalidInput("softmax_xent: label out of range");
    const double shift = logits.row(i).maxCoeff();
    Vector exps = (logits.row(i).transpose().array() - shift).exp();
    const double z = exps.sum();
    total += std::log(z) - (logits(i, y) - shift);
    res.dlogits.row(i) = (exps / z).transpose();
    res.dlogits(i, y) -= 1.0;
  }
  res.loss = total / static_cast<double>(n);
  res.dlogits /= static_cast<double>(n);
  return res;
}

/// Argmax per row; ties resolve to the lowest class index.
inline std::vector<int> predict_labels(const Matrix& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    int best = 0;
    for (Eigen::Index j = 1; j < logits.cols(); ++j) {
      if (logits(i, j) > logits(i, best)) best = static_cast<int>(j);
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Full network: a stack of BiMap -> (RBN) -> ReEig blocks with a LogEig /
// dense-head classifier on top.
// ---------------------------------------------------------------------------

struct NetworkSpec {
  std::vector<Eigen::Index> dims;  // input dim followed by one entry per block
  Eigen::Index num_classes = 0;
  bool use_rbn = true;
  double reeig_eps = 1e-4;
  double eta = 0.9;
  KarcherConfig karcher;
  int rbn_unroll = 0;

  Eigen::Index depth() const { return static_cast<Eigen::Index>(dims.size()) - 1; }
  Eigen::Index feature_dim() const { return dims.back() * dims.back(); }

  void validate() const {
    if (dims.size() < 2) throw InvalidSpec("NetworkSpec: need at least one block");
    for (std::size_t i = 0; i < dims.size(); ++i) {
      if (dims[i] < 1) throw InvalidSpec("NetworkSpec: dims must be positive");
      if (i > 0 && dims[i] > dims[i - 1]) {
        throw InvalidSpec("NetworkSpec: dims must be non-increasing");
      }
    }
    if (num_classes < 2) throw InvalidSpec("NetworkSpec: need at least two classes");
    if (!(reeig_eps > 0.0)) throw InvalidSpec("NetworkSpec: reeig_eps must be positive");
    if (!(eta > 0.0 && eta < 1.0)) throw InvalidSpec("NetworkSpec: eta must lie in (0, 1)");
    if (rbn_unroll != 0 && rbn_unroll != 1) {
      throw InvalidSpec("NetworkSpec: rbn_unroll must be 0 or 1");
    }
    karcher.validate();
  }
};

class Network {
 public:
  Network(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)), head_(2, 1) {
    spec_.validate();
    for (Eigen::Index l = 0; l < spec_.depth(); ++l) {
      bimaps_.push_back(BiMapLayer::random(
          spec_.dims[static_cast<std::size_t>(l)],
          spec_.dims[static_cast<std::size_t>(l) + 1],
          derive_seed(seed, 0x100 + static_cast<std::uint64_t>(l))));
      if (spec_.use_rbn) {
        rbns_.emplace_back(spec_.dims[static_cast<std::size_t>(l) + 1], spec_.eta,
                           spec_.karcher, spec_.rbn_unroll);
      }
      reeigs_.emplace_back(spec_.reeig_eps);
    }
    head_ = DenseHead::random(spec_.num_classes, spec_.feature_dim(),
                              derive_seed(seed, 0x200));
  }

  const NetworkSpec& spec() const { return spec_; }
  Eigen::Index depth() const { return spec_.depth(); }
  std::vector<BiMapLayer>& bimap_layers() { return bimaps_; }
  const std::vector<BiMapLayer>& bimap_layers() const { return bimaps_; }
  std::vector<RBNLayer>& rbn_layers() { return rbns_; }
  const std::vector<RBNLayer>& rbn_layers() const { return rbns_; }
  DenseHead& head() { return head_; }
  const DenseHead& head() const { return head_; }

  struct ForwardCache {
    std::vector<std::vector<SPDMatrix>> bimap_inputs;  // input batch per block
    std::vector<RBNCache> rbn;                         // per block when RBN is on
    std::vector<std::vector<EigDecomposition>> reeig;  // per block
    std::vector<EigDecomposition> logeig;
    Matrix features;
    Matrix logits;
    Matrix dlogits;
    bool has_loss = false;
    double loss = std::numeric_limits<double>::quiet_NaN();
    bool karcher_converged = true;
  };

  struct ForwardOptions {
    bool training = false;
    bool update_running = true;  // advance RBN running means (training only)
    // Optional per-block batch-mean anchors, used to re-run a training
    // forward with the means held constant.
    const std::vector<SPDMatrix>* pinned_rbn_anchors = nullptr;
  };

  ForwardCache forward(const SPDBatch& batch) { return forward(batch, ForwardOptions{}); }

  /// Runs the network over a batch. Loss and dlogits are filled only when the
  /// batch carries labels. Evaluation mode leaves all layer state untouched.
  ForwardCache forward(const SPDBatch& batch, const ForwardOptions& opts) {
    if (batch.size() == 0) throw InvalidInput("Network: empty batch");
    if (batch.dim() != spec_.dims.front()) {
      throw InvalidInput("Network: input dim mismatch");
    }
    if (opts.pinned_rbn_anchors &&
        static_cast<Eigen::Index>(opts.pinned_rbn_anchors->size()) != depth()) {
      throw InvalidInput("Network: pinned anchor count mismatch");
    }

    ForwardCache cache;
    std::vector<SPDMatrix> current = batch.items;
    for (Eigen::Index l = 0; l < depth(); ++l) {
      const std::size_t li = static_cast<std::size_t>(l);
      cache.bimap_inputs.push_back(current);
      current = bimaps_[li].forward(current);
      if (spec_.use_rbn) {
        if (opts.training) {
          RBNCache rc;
          const SPDMatrix* pin =
              opts.pinned_rbn_anchors ? &(*opts.pinned_rbn_anchors)[li] : nullptr;
          current = rbns_[li].forward_train(current, &rc, pin, opts.update_running);
          cache.karcher_converged = cache.karcher_converged && rc.karcher_converged;
          cache.rbn.push_back(std::move(rc));
        } else {
          current = rbns_[li].forward_eval(current);
        }
      }
      cache.reeig.emplace_back();
      current = reeigs_[li].forward(current, &cache.reeig.back());
    }
    cache.features = logeig_.forward(current, &cache.logeig);
    cache.logits = head_.forward(cache.features);
    if (batch.has_labels()) {
      XentResult xr = softmax_xent(cache.logits, batch.labels);
      cache.loss = xr.loss;
      cache.dlogits = std::move(xr.dlogits);
      cache.has_loss = true;
    }
    return cache;
  }

  struct Gradients {
    std::vector<Matrix> bimap_weight;  // per block
    std::vector<Matrix> rbn_bias;      // per block when RBN is on
    Matrix head_weight;
    Vector head_bias;
  };

  Gradients backward(const ForwardCache& cache) const {
    if (!cache.has_loss) throw InvalidState("Network: backward requires a labeled forward");
    Gradients grads;
    grads.bimap_weight.resize(static_cast<std::size_t>(depth()));
    if (spec_.use_rbn) grads.rbn_bias.resize(static_cast<std::size_t>(depth()));

    DenseHead::Grad hg = head_.backward(cache.features, cache.dlogits);
    grads.head_weight = std::move(hg.dweight);
    grads.head_bias = std::move(hg.dbias);
    std::vector<SymMatrix> upstream = logeig_.backward(cache.logeig, hg.dfeatures);

    for (Eigen::Index l = depth() - 1; l >= 0; --l) {
      const std::size_t li = static_cast<std::size_t>(l);
      upstream = reeigs_[li].backward(cache.reeig[li], upstream);
      if (spec_.use_rbn) {
        RBNLayer::Grad rg = rbns_[li].backward(cache.rbn[li], upstream);
        grads.rbn_bias[li] = std::move(rg.dbias);
        upstream = std::move(rg.dinputs);
      }
      BiMapLayer::Grad bg = bimaps_[li].backward(cache.bimap_inputs[li], upstream);
      grads.bimap_weight[li] = std::move(bg.dweight);
      upstream = std::move(bg.dinputs);
    }
    return grads;
  }

  /// Collects the per-block batch-mean anchors recorded by a training
  /// forward, in the form forward() accepts as pinned anchors.
  static std::vector<SPDMatrix> anchors_of(const ForwardCache& cache) {
    std::vector<SPDMatrix> anchors;
    anchors.reserve(cache.rbn.size());
    for (const RBNCache& rc : cache.rbn) anchors.push_back(rc.anchor);
    return anchors;
  }

 private:
  NetworkSpec spec_;
  std::vector<BiMapLayer> bimaps_;
  std::vector<RBNLayer> rbns_;
  std::vector<ReEigLayer> reeigs_;
  LogEigLayer logeig_;
  DenseHead head_;
};

}  // namespace spdnet
