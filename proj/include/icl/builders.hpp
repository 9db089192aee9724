#pragma once

#include "icl/encoding.hpp"
#include "icl/oracles.hpp"
#include "icl/relu_approx.hpp"

#include <map>
#include <string>
#include <vector>

namespace icl {

struct ConstructionReport {
  std::string kind;
  Index layers = 0;
  std::vector<Index> heads;    // per layer
  std::vector<Index> hidden;   // per layer
  double op_norm = 0;
  double norm_bound = 0;
  std::string bound_formula;
  std::map<std::string, double> values;  // step size, κ, radii, ... as used
};

struct Construction {
  TransformerParams params;
  Layout layout;
  ConstructionReport report;
};

// Fills the structural part of the report and the measured op_norm.
void finalize(Construction& c, const std::string& kind, double bound, const std::string& formula);

// Where a gradient-descent block reads and writes.  `out` receives the final
// linear/link read-out (the y slot for stand-alone builders).
struct GdSlots {
  Index D = 0, d = 0;
  Index x = 0, y = 0, w = 0, ones = 0, t = 0, out = 0;
};

GdSlots standard_slots(Index d, Index D);

// One attention layer taking w ← w − η(∇L̂(w) + λw) on tokens tagged t = 1.
// `mask_R` masks tokens with t ≠ 1 through the term −mask_R·(1 − t_j);
// `value_scale` is n / N_train, n being the sequence length the layer will see.
Layer gd_step_attention(const GdSlots& s, const SumOfRelus& loss_grad, double eta, double lambda,
                        double mask_R, double value_scale);

// Two heads writing <w, x_i> into slot `out` of every token (σ(t) − σ(−t) = t).
Layer linear_readout(const GdSlots& s);

// One head per term of g, writing g(<w, x_i>) into slot `out` of every token.
Layer link_readout(const GdSlots& s, const SumOfRelus& g);

// Exact MLP implementation of prox_{ηR} on the w slot (4d units for l1, 2d otherwise).
MlpLayer prox_mlp(const GdSlots& s, const Regularizer& reg, double eta);

struct GdConfig {
  Index d = 1, N = 1;
  double eta = 0;
  int steps = 1;
  SumOfRelus loss_grad = exact_square_loss_grad();
  double lambda_l2 = 0;
  double B_x = 1, B_w = 1, B_y = 1;
  Index D = 0;  // 0 picks the minimum 2d + 3

  double R() const;
  Index token_dim() const { return D ? D : 2 * d + 3; }
};

void validate(const GdConfig& cfg);

Layer build_gd_step_layer(const GdConfig& cfg);

// `steps` step layers followed by the linear read-out.
Construction build_icgd(const GdConfig& cfg);

// Layers: ⌈2κ ln(B_x B_w / 2ε)⌉ steps with η = 1/(β+λ), κ = (β+λ)/(α+λ), then the read-out.
Construction build_ridge(Index d, Index N, double lambda, double alpha, double beta, double B_w, double eps,
                         double B_x = 1, double B_y = 0);
int ridge_steps(double lambda, double alpha, double beta, double B_w, double eps, double B_x);

Construction build_icpgd(const GdConfig& cfg, const Regularizer& reg);

// η = 1/β, ⌈β B_w² / ε⌉ proximal steps then the read-out.
Construction build_lasso(Index d, Index N, double lambda_N, double beta, double B_w, double eps,
                         double B_x = 1, double B_y = 1);

struct GlmConfig {
  Index d = 1, N = 1;
  SumOfRelus link;       // g, one input
  SumOfRelus loss_grad;  // ∂_1ℓ(s, t) = g(s) − t; lifted from `link` when empty
  double L_g = 1;        // sup |g'|
  double alpha = 1, beta = 1;
  double B_w = 1, B_x = 1, B_y = 1;
  double eps = 0.1;
  Index D = 0;
};

// T = ⌈2κ ln(L_g B_w B_x / ε)⌉ steps (η = 1/β, κ = β/α) then the link read-out.
Construction build_glm(const GlmConfig& cfg);
int glm_steps(const GlmConfig& cfg);
// Accuracy the link rep must reach for the total error to stay within ε.
double glm_link_tolerance(const GlmConfig& cfg);

struct NnConfig {
  Index d = 1, N = 1;
  int K = 1;
  SumOfRelus act;        // r
  SumOfRelus act_grad;   // (s, t) ↦ s·r'(t)
  SumOfRelus loss_grad = exact_square_loss_grad();
  double act_bound = 1;  // sup |r| on the activation domain
  double box_radius = 1; // W = B_∞(R_w)
  double eta = 0.1;
  int steps = 1;
  double B_x = 1, B_y = 1;
  Index D = 0;           // 0 picks the minimum

  double B_u() const { return box_radius; }
  double B_v() const;    // √d · R_w
  double radius_act() const;       // domain needed by act
  double radius_loss() const;      // domain needed by loss_grad
  double radius_act_grad() const;  // domain needed by act_grad
  Index token_dim() const;
};

// Weights occupy w = [v_1; u_1; ...; v_K; u_K] right after y, then a prediction
// slot and a loss-derivative slot.  2·steps layers.
Construction build_nn_gd(const NnConfig& cfg);

Layout nn_layout(const NnConfig& cfg);

// Embeds params whose tokens are [x (d); y; ones; t; private...] into the
// standard layout [x; y; private...; ones; t].
TransformerParams compact_to_standard(const TransformerParams& p, Index d);

}  // namespace icl
