#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "frozenseg/autodiff.hpp"

namespace frozenseg {

using ParameterList = std::vector<Parameter*>;

/// y = x W + b with W stored input x output.
struct Linear {
  Parameter weight;
  Parameter bias;

  Linear() = default;
  Linear(const std::string& name, int in, int out, std::mt19937_64& rng);

  int in_features() const noexcept { return static_cast<int>(weight.value.rows()); }
  int out_features() const noexcept { return static_cast<int>(weight.value.cols()); }
  Var operator()(Tape& tape, Var x);
  void collect(ParameterList& out);
};

struct LayerNorm {
  Parameter gamma;
  Parameter beta;

  LayerNorm() = default;
  LayerNorm(const std::string& name, int dim);

  Var operator()(Tape& tape, Var x);
  void collect(ParameterList& out);
};

/// Projections of a multi-head attention block. The softmax scale uses the
/// per-head dimension.
struct AttentionParams {
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  int heads = 1;

  AttentionParams() = default;
  /// Throws ConfigError unless dim is divisible by heads.
  AttentionParams(const std::string& name, int dim, int heads, std::mt19937_64& rng);

  int dim() const noexcept { return query.out_features(); }
  void collect(ParameterList& out);
};

/// Multi-head attention of `queries` over `keys` / `values` (token rows).
/// `allow`, when given, is a queries x keys 0/1 matrix restricting attention;
/// rows without any allowed key attend everywhere. When `weights_out` is set
/// it receives the head-averaged attention weights.
Var multi_head_attention(Tape& tape, AttentionParams& p, Var queries, Var keys, Var values,
                         const Matrix* allow = nullptr, Matrix* weights_out = nullptr);

}  // namespace frozenseg
