#pragma once

#include "icl/instance.hpp"
#include "icl/tf.hpp"

#include <optional>
#include <string>
#include <vector>

namespace icl {

// Named scratch regions of a token; every builder returns one so that
// read-outs do not depend on hard-coded offsets.
struct Slot {
  std::string name;
  Index begin = 0;
  Index size = 1;
};

struct Layout {
  Index D = 0;
  Index d = 0;
  std::vector<Slot> slots;

  bool has(const std::string& name) const;
  const Slot& at(const std::string& name) const;
  Index index(const std::string& name, Index offset = 0) const { return at(name).begin + offset; }
  void add(const std::string& name, Index begin, Index size = 1) { slots.push_back({name, begin, size}); }
};

// Standard encoder layout: x, y, w (d-dim scratch right after y), ones at D-2, tag at D-1.
Layout standard_layout(Index d, Index D);

// Column i = [x_i; y_i (0 for the query); 0; 1; t_i]; t = 1 train, -1 val, 0 query.
Tokens encode_icl(const IclInstance& inst, Index D,
                  const std::optional<std::vector<int>>& split_tags = std::nullopt);

// Writes w into the `w` slot of every token.
void write_w(Tokens& H, const Vector& w, Index d);

// Prediction slot of the query token, optionally projected onto [-clip, clip].
double read_y(const Tokens& H, Index d, std::optional<double> clip = std::nullopt);
Vector read_w(const Tokens& H, Index token, Index d);
Vector read_slot(const Tokens& H, Index token, const Slot& slot);

// Conjugates every weight by the coordinate injection old -> map[old] into a
// D_new-dimensional token.
TransformerParams embed(const TransformerParams& p, const std::vector<Index>& map, Index D_new);

// Parallel composition of a (on [shared; a-private]) and b (on [shared; b-private]);
// the joined token is [shared; a-private; b-private].  The shorter stack is padded
// with empty layers.  Exact as long as neither writes into the shared block.
TransformerParams join_parallel(const TransformerParams& a, const TransformerParams& b, Index shared);

// Layer-wise concatenation (a's layers then b's), same token dimension.
TransformerParams concat(const TransformerParams& a, const TransformerParams& b);

// Merges the heads and MLP units of two single layers acting on the same token.
Layer merge_layers(const Layer& a, const Layer& b);

Layer empty_layer();

// Decoder prompt: tokens alternate [x_i; 0] and [0; y_i], positional rows
// [.., ⌈i/2⌉, 1, mod(i+1, 2)] at the bottom.  D >= d + 6.
Tokens encode_decoder(const IclInstance& inst, Index D);

// Two-layer masked transformer copying x_{⌈i/2⌉} into the x-slot of every token.
TransformerParams decoder_format_convert(Index d, Index D);

}  // namespace icl
