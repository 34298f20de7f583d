#include "frozenseg/layers.hpp"

#include <cmath>

#include "frozenseg/errors.hpp"

namespace frozenseg {

Linear::Linear(const std::string& name, int in, int out, std::mt19937_64& rng)
    : weight(name + ".weight", Matrix(in, out)), bias(name + ".bias", Matrix(1, out)) {
  const Real limit = std::sqrt(6.0 / (in + out));
  std::uniform_real_distribution<Real> u(-limit, limit);
  for (auto& v : weight.value.data()) v = u(rng);
}

Var Linear::operator()(Tape& tape, Var x) {
  return ad::add_row(ad::matmul(x, tape.parameter(weight)), tape.parameter(bias));
}

void Linear::collect(ParameterList& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

LayerNorm::LayerNorm(const std::string& name, int dim)
    : gamma(name + ".gamma", Matrix(1, dim, 1.0)), beta(name + ".beta", Matrix(1, dim)) {}

Var LayerNorm::operator()(Tape& tape, Var x) {
  return ad::layer_norm_rows(x, tape.parameter(gamma), tape.parameter(beta));
}

void LayerNorm::collect(ParameterList& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

AttentionParams::AttentionParams(const std::string& name, int dim, int h, std::mt19937_64& rng)
    : heads(h) {
  if (h <= 0 || dim % h != 0) {
    throw ConfigError(name + ": dimension " + std::to_string(dim) + " not divisible by " + std::to_string(h) +
                      " heads");
  }
  query = Linear(name + ".q", dim, dim, rng);
  key = Linear(name + ".k", dim, dim, rng);
  value = Linear(name + ".v", dim, dim, rng);
  output = Linear(name + ".out", dim, dim, rng);
}

void AttentionParams::collect(ParameterList& out) {
  query.collect(out);
  key.collect(out);
  value.collect(out);
  output.collect(out);
}

Var multi_head_attention(Tape& tape, AttentionParams& p, Var queries, Var keys, Var values,
                         const Matrix* allow, Matrix* weights_out) {
  if (keys.rows() != values.rows()) throw DimensionError("attention: key and value token counts differ");
  const int dim = p.dim();
  if (queries.cols() != static_cast<std::size_t>(p.query.in_features()) ||
      keys.cols() != static_cast<std::size_t>(p.key.in_features()) ||
      values.cols() != static_cast<std::size_t>(p.value.in_features())) {
    throw DimensionError("attention: token width does not match projection input");
  }
  const Matrix all_allowed(queries.rows(), keys.rows(), 1.0);
  const Matrix& mask = allow != nullptr ? *allow : all_allowed;
  if (mask.rows() != queries.rows() || mask.cols() != keys.rows()) {
    throw DimensionError("attention: mask shape " + shape_string(mask) + " does not match scores");
  }
  Var q = p.query(tape, queries);
  Var k = p.key(tape, keys);
  Var v = p.value(tape, values);
  const int dh = dim / p.heads;
  const Real scale = 1.0 / std::sqrt(static_cast<Real>(dh));
  if (weights_out != nullptr) *weights_out = Matrix(queries.rows(), keys.rows());
  std::vector<Var> heads;
  for (int h = 0; h < p.heads; ++h) {
    Var qh = p.heads == 1 ? q : ad::slice_cols(q, static_cast<std::size_t>(h * dh), dh);
    Var kh = p.heads == 1 ? k : ad::slice_cols(k, static_cast<std::size_t>(h * dh), dh);
    Var vh = p.heads == 1 ? v : ad::slice_cols(v, static_cast<std::size_t>(h * dh), dh);
    Var w = ad::masked_softmax_rows(ad::matmul(qh, ad::transpose(kh)), mask, scale);
    if (weights_out != nullptr) {
      for (std::size_t i = 0; i < w.value().size(); ++i)
        weights_out->data()[i] += w.value().data()[i] / p.heads;
    }
    heads.push_back(ad::matmul(w, vh));
  }
  Var merged = p.heads == 1 ? heads.front() : ad::concat_cols(heads);
  return p.output(tape, merged);
}

}  // namespace frozenseg
