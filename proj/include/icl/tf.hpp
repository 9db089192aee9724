#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <type_traits>
#include <string>
#include <vector>

namespace icl {

using Index = Eigen::Index;

template <class Scalar> using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar> using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using Matrix = MatrixT<double>;
using Vector = VectorT<double>;

// A token matrix stores one token per column: D rows, n columns.
using Tokens = Matrix;

template <class Scalar>
struct AttnHeadT {
  MatrixT<Scalar> Q, K, V;
};

template <class Scalar>
struct MlpLayerT {
  MatrixT<Scalar> W1;  // hidden x D
  MatrixT<Scalar> W2;  // D x hidden
  Index hidden() const { return W1.rows(); }
};

template <class Scalar>
struct LayerT {
  std::vector<AttnHeadT<Scalar>> heads;
  MlpLayerT<Scalar> mlp;
};

template <class Scalar>
struct ParamsT {
  Index D = 0;
  bool masked = false;  // decoder mode: causal 1/i normalisation
  std::vector<LayerT<Scalar>> layers;
};

using AttnHead = AttnHeadT<double>;
using MlpLayer = MlpLayerT<double>;
using Layer = LayerT<double>;
using TransformerParams = ParamsT<double>;

class DimensionError : public std::runtime_error {
 public:
  DimensionError(int layer, const std::string& what)
      : std::runtime_error("layer " + std::to_string(layer) + ": " + what), layer_(layer) {}
  int layer() const { return layer_; }

 private:
  int layer_;
};

class NonFiniteError : public std::runtime_error {
 public:
  explicit NonFiniteError(int layer)
      : std::runtime_error("non-finite activation after layer " + std::to_string(layer)),
        layer_(layer) {}
  int layer() const { return layer_; }

 private:
  int layer_;
};

template <class Scalar>
inline Scalar relu(Scalar x) { return x > Scalar(0) ? x : Scalar(0); }

namespace detail {

// Most constructed weights are very sparse; every product below is restricted
// to the rows/columns that can actually contribute.  Skipping exact zeros does
// not change the result beyond summation order.
template <class Derived>
std::vector<Index> nonzero_rows(const Eigen::MatrixBase<Derived>& M) {
  std::vector<Index> r;
  for (Index i = 0; i < M.rows(); ++i)
    if ((M.row(i).array() != 0).any()) r.push_back(i);
  return r;
}

template <class Derived>
std::vector<Index> nonzero_cols(const Eigen::MatrixBase<Derived>& M) {
  std::vector<Index> c;
  for (Index j = 0; j < M.cols(); ++j)
    if ((M.col(j).array() != 0).any()) c.push_back(j);
  return c;
}

inline std::vector<Index> intersect(const std::vector<Index>& a, const std::vector<Index>& b) {
  std::vector<Index> out;
  size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) ++i;
    else if (b[j] < a[i]) ++j;
    else { out.push_back(a[i]); ++i; ++j; }
  }
  return out;
}

// Returns rows(sel) of M restricted to its nonzero columns, times H.
template <class Scalar>
MatrixT<Scalar> project(const MatrixT<Scalar>& M, const std::vector<Index>& rows,
                        const MatrixT<Scalar>& H) {
  MatrixT<Scalar> sub = M(rows, Eigen::all);
  const auto cols = nonzero_cols(sub);
  if (cols.empty()) return MatrixT<Scalar>::Zero(static_cast<Index>(rows.size()), H.cols());
  return sub(Eigen::all, cols) * H(cols, Eigen::all);
}

template <class Scalar>
void add_head(const AttnHeadT<Scalar>& h, const MatrixT<Scalar>& H, MatrixT<Scalar>& out,
              bool masked) {
  const Index n = H.cols();
  const auto vrows = nonzero_rows(h.V);
  if (vrows.empty()) return;
  const auto srows = intersect(nonzero_rows(h.Q), nonzero_rows(h.K));
  if (srows.empty()) return;  // every score is σ(0) = 0

  const MatrixT<Scalar> q = project(h.Q, srows, H);
  const MatrixT<Scalar> k = project(h.K, srows, H);
  // P(j, i) = σ(<Q h_i, K h_j>)
  MatrixT<Scalar> P = (k.transpose() * q).cwiseMax(Scalar(0));
  if (masked) P.template triangularView<Eigen::StrictlyLower>().setZero();

  const MatrixT<Scalar> v = project(h.V, vrows, H);
  MatrixT<Scalar> contrib = v * P;
  if (masked) {
    for (Index i = 0; i < n; ++i) contrib.col(i) /= Scalar(i + 1);
  } else {
    contrib /= Scalar(n);
  }
  out(vrows, Eigen::all) += contrib;
}

}  // namespace detail

template <class Scalar>
void check_layer_dims(const LayerT<Scalar>& layer, Index D, int index) {
  for (const auto& h : layer.heads) {
    if (h.Q.rows() != D || h.Q.cols() != D || h.K.rows() != D || h.K.cols() != D ||
        h.V.rows() != D || h.V.cols() != D)
      throw DimensionError(index, "attention head is not " + std::to_string(D) + "x" +
                                      std::to_string(D));
  }
  const auto& m = layer.mlp;
  if (m.W1.rows() != m.W2.cols() || (m.W1.rows() > 0 && (m.W1.cols() != D || m.W2.rows() != D)))
    throw DimensionError(index, "mlp weights do not match token dimension");
}

// h̃_i = h_i + Σ_m (1/n) Σ_j σ(<Q_m h_i, K_m h_j>) V_m h_j
template <class Scalar>
MatrixT<Scalar> attn_forward(const std::vector<AttnHeadT<Scalar>>& heads, const MatrixT<Scalar>& H,
                             int layer_index = 0) {
  for (const auto& h : heads)
    if (h.Q.cols() != H.rows() || h.K.cols() != H.rows() || h.V.cols() != H.rows() ||
        h.Q.rows() != H.rows() || h.K.rows() != H.rows() || h.V.rows() != H.rows())
      throw DimensionError(layer_index, "attention head does not match token dimension");
  MatrixT<Scalar> out = H;
  for (const auto& h : heads) detail::add_head(h, H, out, false);
  return out;
}

// Decoder variant: token i only attends to j <= i with weight 1/i.
template <class Scalar>
MatrixT<Scalar> masked_attn_forward(const std::vector<AttnHeadT<Scalar>>& heads,
                                    const MatrixT<Scalar>& H, int layer_index = 0) {
  for (const auto& h : heads)
    if (h.Q.cols() != H.rows() || h.K.cols() != H.rows() || h.V.cols() != H.rows() ||
        h.Q.rows() != H.rows() || h.K.rows() != H.rows() || h.V.rows() != H.rows())
      throw DimensionError(layer_index, "attention head does not match token dimension");
  MatrixT<Scalar> out = H;
  for (const auto& h : heads) detail::add_head(h, H, out, true);
  return out;
}

// h̃_i = h_i + W2 σ(W1 h_i)
template <class Scalar>
MatrixT<Scalar> mlp_forward(const MlpLayerT<Scalar>& mlp, const MatrixT<Scalar>& H,
                            int layer_index = 0) {
  if (mlp.hidden() == 0) return H;
  if (mlp.W1.cols() != H.rows() || mlp.W2.rows() != H.rows() || mlp.W2.cols() != mlp.W1.rows())
    throw DimensionError(layer_index, "mlp weights do not match token dimension");
  const auto out_rows = detail::nonzero_rows(mlp.W2);
  MatrixT<Scalar> out = H;
  if (out_rows.empty()) return out;
  const auto units = detail::nonzero_cols(mlp.W2);
  const MatrixT<Scalar> pre = detail::project(mlp.W1, units, H);
  const MatrixT<Scalar> act = pre.cwiseMax(Scalar(0));
  out(out_rows, Eigen::all) += mlp.W2(out_rows, units) * act;
  return out;
}

template <class Scalar>
void clip_columns(MatrixT<Scalar>& H, Scalar radius) {
  for (Index i = 0; i < H.cols(); ++i) {
    const Scalar nrm = H.col(i).norm();
    if (nrm > radius) H.col(i) *= radius / nrm;
  }
}

template <class Scalar>
MatrixT<Scalar> layer_forward(const ParamsT<Scalar>& params, Index l, const MatrixT<Scalar>& H) {
  const auto& layer = params.layers[static_cast<size_t>(l)];
  const int li = static_cast<int>(l);
  MatrixT<Scalar> out = params.masked ? masked_attn_forward(layer.heads, H, li)
                                      : attn_forward(layer.heads, H, li);
  return mlp_forward(layer.mlp, out, li);
}

// Runs every layer; `trace`, when given, receives the input and each layer's output.
template <class Scalar>
MatrixT<Scalar> tf_forward(const ParamsT<Scalar>& params, const MatrixT<Scalar>& H,
                           std::optional<std::type_identity_t<Scalar>> clip_radius = std::nullopt,
                           std::vector<MatrixT<Scalar>>* trace = nullptr) {
  if (H.rows() != params.D)
    throw DimensionError(0, "input has " + std::to_string(H.rows()) + " rows, expected " +
                                std::to_string(params.D));
  MatrixT<Scalar> cur = H;
  if (clip_radius) clip_columns(cur, *clip_radius);
  if (trace) trace->push_back(cur);
  for (Index l = 0; l < static_cast<Index>(params.layers.size()); ++l) {
    cur = layer_forward(params, l, cur);
    if (clip_radius) clip_columns(cur, *clip_radius);
    if (!cur.allFinite()) throw NonFiniteError(static_cast<int>(l));
    if (trace) trace->push_back(cur);
  }
  return cur;
}

// Spectral norm; zero rows and columns are dropped first since they do not
// change the singular values.
template <class Scalar>
Scalar spectral_norm(const MatrixT<Scalar>& M) {
  if (M.size() == 0) return Scalar(0);
  const auto r = detail::nonzero_rows(M);
  if (r.empty()) return Scalar(0);
  MatrixT<Scalar> sub = M(r, Eigen::all);
  const auto c = detail::nonzero_cols(sub);
  MatrixT<Scalar> core = sub(Eigen::all, c);
  if (core.rows() == 1 || core.cols() == 1) return core.norm();
  Eigen::JacobiSVD<MatrixT<Scalar>> svd(core);
  return svd.singularValues()(0);
}

template <class Scalar>
Scalar layer_norm(const LayerT<Scalar>& layer) {
  Scalar qk = 0, v = 0;
  for (const auto& h : layer.heads) {
    qk = std::max({qk, spectral_norm(h.Q), spectral_norm(h.K)});
    v += spectral_norm(h.V);
  }
  return qk + v + spectral_norm(layer.mlp.W1) + spectral_norm(layer.mlp.W2);
}

// max over layers of { max_m max(|Q_m|, |K_m|) + Σ_m |V_m| + |W1| + |W2| }
template <class Scalar>
Scalar op_norm(const ParamsT<Scalar>& params) {
  Scalar best = 0;
  for (const auto& layer : params.layers) best = std::max(best, layer_norm(layer));
  return best;
}

}  // namespace icl
