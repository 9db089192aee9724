#pragma once

#include "icl/tf.hpp"

#include <optional>
#include <vector>

namespace icl {

enum class Split : int { Train = 1, Val = -1 };

// One in-context prompt: N labelled examples (rows of xs) plus a query.
struct IclInstance {
  Matrix xs;                     // N x d
  Vector ys;                     // N
  Vector x_query;                // d
  std::optional<double> y_query;
  std::vector<int> split;        // empty = all train; else per-example 1 (train) / -1 (val)

  Index N() const { return xs.rows(); }
  Index d() const { return xs.cols(); }

  int tag(Index i) const { return split.empty() ? 1 : split[static_cast<size_t>(i)]; }
  Index count(int t) const {
    Index c = 0;
    for (Index i = 0; i < N(); ++i) c += tag(i) == t;
    return c;
  }
};

void validate(const IclInstance& inst);

// Train = first ⌈N/2⌉ examples, validation = the rest.
std::vector<int> half_split(Index N);

// Sub-instance containing only the examples carrying tag `t` (same query).
IclInstance subset(const IclInstance& inst, int t);

}  // namespace icl
