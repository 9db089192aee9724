#include "icl/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace icl {

void validate(const IclInstance& inst) {
  if (inst.N() < 1 || inst.d() < 1) throw std::invalid_argument("instance needs N >= 1 and d >= 1");
  if (inst.ys.size() != inst.N()) throw std::invalid_argument("ys length differs from N");
  if (inst.x_query.size() != inst.d()) throw std::invalid_argument("x_query length differs from d");
  if (!inst.split.empty() && static_cast<Index>(inst.split.size()) != inst.N())
    throw std::invalid_argument("split tags length differs from N");
  for (int t : inst.split)
    if (t != 1 && t != -1) throw std::invalid_argument("split tags must be 1 or -1");
  if (!inst.xs.allFinite() || !inst.ys.allFinite() || !inst.x_query.allFinite())
    throw std::invalid_argument("instance has non-finite entries");
}

std::vector<int> half_split(Index N) {
  std::vector<int> tags(static_cast<size_t>(N), -1);
  const Index n_train = (N + 1) / 2;
  for (Index i = 0; i < n_train; ++i) tags[static_cast<size_t>(i)] = 1;
  return tags;
}

IclInstance subset(const IclInstance& inst, int t) {
  std::vector<Index> rows;
  for (Index i = 0; i < inst.N(); ++i)
    if (inst.tag(i) == t) rows.push_back(i);
  IclInstance out;
  out.xs = inst.xs(rows, Eigen::all);
  out.ys = inst.ys(rows);
  out.x_query = inst.x_query;
  out.y_query = inst.y_query;
  return out;
}

bool Layout::has(const std::string& name) const {
  return std::any_of(slots.begin(), slots.end(), [&](const Slot& s) { return s.name == name; });
}

const Slot& Layout::at(const std::string& name) const {
  for (const auto& s : slots)
    if (s.name == name) return s;
  throw std::out_of_range("layout has no slot named '" + name + "'");
}

Layout standard_layout(Index d, Index D) {
  Layout L;
  L.D = D;
  L.d = d;
  L.add("x", 0, d);
  L.add("y", d);
  L.add("w", d + 1, d);
  L.add("ones", D - 2);
  L.add("t", D - 1);
  return L;
}

Tokens encode_icl(const IclInstance& inst, Index D, const std::optional<std::vector<int>>& split_tags) {
  validate(inst);
  const Index d = inst.d(), N = inst.N();
  if (D < d + 3) throw std::invalid_argument("token dimension D must be at least d+3");
  std::vector<int> tags = split_tags ? *split_tags : inst.split;
  if (!tags.empty() && static_cast<Index>(tags.size()) != N)
    throw std::invalid_argument("split tags length differs from N");
  Tokens H = Tokens::Zero(D, N + 1);
  for (Index i = 0; i < N; ++i) {
    H.col(i).head(d) = inst.xs.row(i).transpose();
    H(d, i) = inst.ys(i);
    H(D - 2, i) = 1.0;
    H(D - 1, i) = tags.empty() ? 1.0 : tags[static_cast<size_t>(i)];
  }
  H.col(N).head(d) = inst.x_query;
  H(D - 2, N) = 1.0;
  return H;
}

void write_w(Tokens& H, const Vector& w, Index d) {
  for (Index i = 0; i < H.cols(); ++i) H.col(i).segment(d + 1, w.size()) = w;
}

double read_y(const Tokens& H, Index d, std::optional<double> clip) {
  const double y = H(d, H.cols() - 1);
  if (!clip) return y;
  return std::clamp(y, -*clip, *clip);
}

Vector read_w(const Tokens& H, Index token, Index d) { return H.col(token).segment(d + 1, d); }

Vector read_slot(const Tokens& H, Index token, const Slot& slot) {
  return H.col(token).segment(slot.begin, slot.size);
}

namespace {

Matrix conj(const Matrix& M, const std::vector<Index>& map, Index D_new) {
  Matrix out = Matrix::Zero(D_new, D_new);
  for (Index i = 0; i < M.rows(); ++i)
    for (Index j = 0; j < M.cols(); ++j)
      if (M(i, j) != 0) out(map[static_cast<size_t>(i)], map[static_cast<size_t>(j)]) = M(i, j);
  return out;
}

}  // namespace

TransformerParams embed(const TransformerParams& p, const std::vector<Index>& map, Index D_new) {
  if (static_cast<Index>(map.size()) != p.D) throw std::invalid_argument("embedding map size differs from D");
  TransformerParams out;
  out.D = D_new;
  out.masked = p.masked;
  for (const auto& layer : p.layers) {
    Layer l;
    for (const auto& h : layer.heads) l.heads.push_back({conj(h.Q, map, D_new), conj(h.K, map, D_new), conj(h.V, map, D_new)});
    const Index m = layer.mlp.hidden();
    l.mlp.W1 = Matrix::Zero(m, m ? D_new : 0);
    l.mlp.W2 = Matrix::Zero(m ? D_new : 0, m);
    for (Index j = 0; j < p.D && m; ++j) {
      l.mlp.W1.col(map[static_cast<size_t>(j)]) = layer.mlp.W1.col(j);
      l.mlp.W2.row(map[static_cast<size_t>(j)]) = layer.mlp.W2.row(j);
    }
    out.layers.push_back(std::move(l));
  }
  return out;
}

Layer empty_layer() { return Layer{}; }

Layer merge_layers(const Layer& a, const Layer& b) {
  Layer out = a;
  out.heads.insert(out.heads.end(), b.heads.begin(), b.heads.end());
  const Index ma = a.mlp.hidden(), mb = b.mlp.hidden();
  if (mb == 0) return out;
  if (ma == 0) {
    out.mlp = b.mlp;
    return out;
  }
  const Index D = a.mlp.W1.cols();
  out.mlp.W1.resize(ma + mb, D);
  out.mlp.W1 << a.mlp.W1, b.mlp.W1;
  out.mlp.W2.resize(D, ma + mb);
  out.mlp.W2 << a.mlp.W2, b.mlp.W2;
  return out;
}

TransformerParams join_parallel(const TransformerParams& a, const TransformerParams& b, Index shared) {
  if (shared < 0 || shared > a.D || shared > b.D)
    throw std::invalid_argument("shared prefix exceeds a transformer's token dimension");
  if (a.masked != b.masked) throw std::invalid_argument("cannot join encoder and decoder transformers");
  const Index Da = a.D, Db = b.D;
  const Index D = Da + Db - shared;
  std::vector<Index> ma(static_cast<size_t>(Da)), mb(static_cast<size_t>(Db));
  for (Index i = 0; i < Da; ++i) ma[static_cast<size_t>(i)] = i;
  for (Index i = 0; i < Db; ++i) mb[static_cast<size_t>(i)] = i < shared ? i : Da + (i - shared);
  const TransformerParams ea = embed(a, ma, D), eb = embed(b, mb, D);
  TransformerParams out;
  out.D = D;
  out.masked = a.masked;
  const size_t L = std::max(ea.layers.size(), eb.layers.size());
  for (size_t l = 0; l < L; ++l) {
    const Layer la = l < ea.layers.size() ? ea.layers[l] : empty_layer();
    const Layer lb = l < eb.layers.size() ? eb.layers[l] : empty_layer();
    out.layers.push_back(merge_layers(la, lb));
  }
  return out;
}

TransformerParams concat(const TransformerParams& a, const TransformerParams& b) {
  if (a.D != b.D) throw std::invalid_argument("cannot concatenate transformers of different D");
  TransformerParams out = a;
  out.layers.insert(out.layers.end(), b.layers.begin(), b.layers.end());
  return out;
}

Tokens encode_decoder(const IclInstance& inst, Index D) {
  validate(inst);
  const Index d = inst.d(), N = inst.N();
  if (D < d + 6) throw std::invalid_argument("decoder format needs D >= d+6");
  Tokens H = Tokens::Zero(D, 2 * N + 1);
  for (Index c = 0; c < 2 * N + 1; ++c) {
    const Index i = c + 1;  // 1-based position
    const Index k = (i + 1) / 2;
    if (i % 2 == 1) H.col(c).head(d) = k <= N ? Vector(inst.xs.row(k - 1).transpose()) : inst.x_query;
    else H(d, c) = inst.ys(k - 1);
    H(D - 3, c) = static_cast<double>(k);
    H(D - 2, c) = 1.0;
    H(D - 1, c) = static_cast<double>((i + 1) % 2);
  }
  return H;
}

TransformerParams decoder_format_convert(Index d, Index D) {
  if (D < d + 6) throw std::invalid_argument("decoder format needs D >= d+6");
  const Index sq = D - 5, lin = D - 4, pos = D - 3, one = D - 2, par = D - 1;
  TransformerParams p;
  p.D = D;
  p.masked = true;
  auto Z = [&] { return Matrix::Zero(D, D).eval(); };

  // Layer 1, at even (label) tokens i = 2k (c_j = ⌈j/2⌉, 2k visible tokens):
  //   weight c_j, value 3c_j:  (3/2k) Σ c_j² = k² + 3k/2 + 1/2
  //   weight 1,   value −3c_j: −3(k+1)/2
  //   weight 1,   value 2c_j:  k + 1
  // and the MLP adds +1 / −1 under the parity bit, leaving sq = k², lin = k.
  // Odd tokens have parity 0 and receive nothing.
  Layer l1;
  for (int m = 0; m < 3; ++m) {
    AttnHead h{Z(), Z(), Z()};
    h.Q(0, par) = 1.0;
    h.K(0, m == 0 ? pos : one) = 1.0;
    if (m == 0) h.V(sq, pos) = 3.0;
    else if (m == 1) h.V(sq, pos) = -3.0;
    else h.V(lin, pos) = 2.0;
    l1.heads.push_back(h);
  }
  l1.mlp.W1 = Matrix::Zero(1, D);
  l1.mlp.W1(0, par) = 1.0;
  l1.mlp.W2 = Matrix::Zero(D, 1);
  l1.mlp.W2(sq, 0) = 1.0;
  l1.mlp.W2(lin, 0) = -1.0;

  // Layer 2: k·[σ(k-c_j+1) - 2σ(k-c_j) + σ(k-c_j-1)] is k·1{c_j = k}; averaged
  // over the 2k visible tokens with value 2u_j this returns x_k.
  Layer l2;
  const double shift[3] = {0.0, 1.0, -1.0};
  const double scale[3] = {-4.0, 2.0, 2.0};
  for (int m = 0; m < 3; ++m) {
    AttnHead h{Z(), Z(), Z()};
    h.Q(0, sq) = 1.0;
    h.Q(1, lin) = 1.0;
    h.K(0, one) = 1.0;
    h.K(1, pos) = -1.0;
    h.K(1, one) = -shift[m];
    for (Index r = 0; r < d; ++r) h.V(r, r) = scale[m];
    l2.heads.push_back(h);
  }
  l2.mlp.W1 = Matrix::Zero(2, D);
  l2.mlp.W1(0, sq) = 1.0;
  l2.mlp.W1(1, lin) = 1.0;
  l2.mlp.W2 = Matrix::Zero(D, 2);
  l2.mlp.W2(sq, 0) = -1.0;
  l2.mlp.W2(lin, 1) = -1.0;

  p.layers = {l1, l2};
  return p;
}

}  // namespace icl
