#pragma once

#include "icl/builders.hpp"

#include <optional>
#include <vector>

namespace icl {

// Fixed slot positions for K candidates inside a D-dimensional token:
// predictions at D−2K−3.., validation losses (later c_k, then u_k) at D−K−3..,
// the aggregate prediction at D−3.
struct SelectionSlots {
  Index D = 0, d = 0;
  int K = 1;
  Index pred(int k) const { return D - 2 * K - 3 + k; }
  Index loss(int k) const { return D - K - 3 + k; }
  Index agg() const { return D - 3; }
  Index y() const { return d; }
  Index ones() const { return D - 2; }
  Index t() const { return D - 1; }
};

struct SelectionConfig {
  Index d = 1, N = 2;
  int K = 1;
  double gamma = 0.1;
  std::vector<int> split;               // empty: first ⌈N/2⌉ train, rest validation
  double R = 1;                         // bound on |f_k(x_i)| and |y_i|
  std::optional<SumOfRelus> loss_rep;   // generic loss ℓ(s, t); empty: exact square loss
  Index D = 0;                          // 0 picks the minimum d + 2K + 4

  Index token_dim() const { return D ? D : d + 2 * K + 4; }
  SelectionSlots slots() const { return {token_dim(), d, K}; }
  std::vector<int> tags() const;
  Index n_train() const;
  Index n_val() const;
};

// Writes the validation loss of f_k (read from pred(k)) into loss(k) of every token.
Layer build_eval_layer(const SelectionConfig& cfg);

// Three layers: loss → c_k = Σ_{l≠k} σ(L_k − L_l) (MLP), c_k → u_k = σ(1 − c_k/γ) (MLP),
// then the telescoping combination Σ_k λ_k f_k into agg() and the y slot (attention).
TransformerParams build_selection_layers(const SelectionConfig& cfg);

// Reference: λ_k = σ(1 − Σ_{l<k} u_l) − σ(1 − Σ_{l≤k} u_l).
std::vector<double> telescoping_weights(const std::vector<double>& u);
// Reference: c and u from the validation losses.
std::vector<double> selection_u(const std::vector<double>& losses, double gamma);

double selection_norm_bound(const SelectionConfig& cfg);

struct RidgeSelectConfig {
  Index d = 1, N = 2;
  std::vector<double> lambdas;
  double alpha = 0.1, beta = 1;
  double B_w = 1, B_x = 1, B_y = 1;
  double gamma = 0.1;
  double eps = 0.01;
  std::vector<int> split;  // empty: half split
};

// Layout: x, y, w_1..w_K (d each), predictions, losses/u, aggregate, ones, t.
Construction build_ridge_lambda_select(const RidgeSelectConfig& cfg);
int ridge_select_steps(const RidgeSelectConfig& cfg);

// Ψ^binary (and its thresholded version) into slots "psi" / "psi_thres".
Construction build_binary_test(Index d, Index N, double band, bool thresholded = true, Index D = 0);

// Ψ^lin into slot "psi_lin" (with t̂ and |t̂|² in "corr" and "corr_sq").
Construction build_correlation_test(Index d, Index N, double lambda_min, double bw_star, Index D = 0);

struct AdaptiveConfig {
  Index d = 1, N = 1;
  double band = 0.1;
  // least-squares branch
  double alpha = 0.1, beta = 1, B_w = 1, B_x = 1, B_y = 1, eps = 0.01;
  // logistic branch
  GlmConfig logistic;
};

// Ψ_thres·ŷ_log + (1 − Ψ_thres)·ŷ_LS into the y slot.
Construction build_adaptive_reg_cls(const AdaptiveConfig& cfg);

struct ConfidentConfig {
  Index d = 1, N = 1;
  double lambda_min = 1, bw_star = 1;
  double alpha = 0.1, beta = 1, B_w = 1, B_x = 1, B_y = 1, eps = 0.01;
};

// ŷ = Ψ^lin·ŷ_LS in the y slot, ψ̂ = Ψ^lin in slot "psi_lin".
Construction build_confident_linreg(const ConfidentConfig& cfg);

}  // namespace icl
