#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "bevloc/nn/tape.hpp"
#include "bevloc/rng.hpp"

namespace bevloc::nn {

/// Named parameter tensors in registration order. Names are stable across
/// runs for a fixed architecture, which the checkpoint format relies on.
class ParamSet {
 public:
  int add(const std::string& name, int rows, int cols, double init_std, Rng& rng);
  int add_constant(const std::string& name, int rows, int cols, double fill);

  int size() const { return static_cast<int>(values_.size()); }
  Mat& value(int idx) { return values_[idx]; }
  const Mat& value(int idx) const { return values_[idx]; }
  const std::string& name(int idx) const { return names_[idx]; }
  int find(const std::string& name) const;
  Mat& operator[](const std::string& name);

  std::int64_t scalar_count() const;

 private:
  std::vector<std::string> names_;
  std::vector<Mat> values_;
  std::unordered_map<std::string, int> index_;
};

/// Per-tape binding of a ParamSet. Parameters become tape leaves lazily, so
/// inference tapes only materialize what they touch, and gradients can be
/// exported into a per-worker accumulation buffer after backward().
class ParamBinding {
 public:
  ParamBinding(Tape& tape, const ParamSet& ps, bool trainable)
      : tape_(&tape), ps_(&ps), trainable_(trainable), node_(ps.size(), -1) {}

  int node(int param_idx);

  /// grads[i] += scale * d(loss)/d(param i) for every touched parameter.
  /// Empty slots in grads are allocated on first contribution.
  void export_grads(std::vector<Mat>& grads, double scale) const;

 private:
  Tape* tape_;
  const ParamSet* ps_;
  bool trainable_;
  std::vector<int> node_;
};

// ---------------------------------------------------------------------------
// layers: thin structs holding ParamSet indices

struct Linear {
  int w = -1, b = -1;
  static Linear make(ParamSet& ps, Rng& rng, const std::string& name, int in, int out,
                     bool bias = true);
  int forward(Tape& t, ParamBinding& pb, int x) const;  // [M,in] -> [M,out]
};

struct LayerNorm {
  int gamma = -1, beta = -1;
  static LayerNorm make(ParamSet& ps, const std::string& name, int dim);
  int forward(Tape& t, ParamBinding& pb, int x) const;
};

struct GroupNorm {
  int gamma = -1, beta = -1;
  int groups = 1;
  static GroupNorm make(ParamSet& ps, const std::string& name, int channels);
  int forward(Tape& t, ParamBinding& pb, int x) const;  // x: [C, S]
  /// Statistics restricted to the masked columns (see Tape::group_norm_masked).
  int forward_masked(Tape& t, ParamBinding& pb, int x,
                     const std::vector<std::uint8_t>& mask) const;
};

struct Conv2d {
  int w = -1, b = -1;
  int in_ch = 0, out_ch = 0, kernel = 3, stride = 1, pad = 1;
  static Conv2d make(ParamSet& ps, Rng& rng, const std::string& name, int in_ch, int out_ch,
                     int kernel, int stride, int pad, bool bias = true);
  /// Returns the output node; h/w are updated to the output spatial size.
  int forward(Tape& t, ParamBinding& pb, int x, int& h, int& w) const;
};

struct Mhsa {
  Linear wq, wk, wv, wo;
  int heads = 1, dim = 0;
  static Mhsa make(ParamSet& ps, Rng& rng, const std::string& name, int dim, int heads);
  int forward(Tape& t, ParamBinding& pb, int x) const;  // [M,dim] -> [M,dim]
};

/// Pre-norm transformer encoder block: x += MHSA(LN(x)); x += MLP(LN(x)).
struct TransformerBlock {
  LayerNorm ln1, ln2;
  Mhsa attn;
  Linear fc1, fc2;
  static TransformerBlock make(ParamSet& ps, Rng& rng, const std::string& name, int dim,
                               int heads, int mlp_ratio);
  int forward(Tape& t, ParamBinding& pb, int x) const;
};

}  // namespace bevloc::nn
