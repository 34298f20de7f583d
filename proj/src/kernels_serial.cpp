#include "frozenseg/errors.hpp"
#include "frozenseg/kernels.hpp"

namespace frozenseg::kernels {

namespace detail {

void check_gemm_shapes(const Matrix& a, bool trans_a, const Matrix& b, bool trans_b,
                       const Matrix& out) {
  const std::size_t m = trans_a ? a.cols() : a.rows();
  const std::size_t k = trans_a ? a.rows() : a.cols();
  const std::size_t kb = trans_b ? b.cols() : b.rows();
  const std::size_t n = trans_b ? b.rows() : b.cols();
  if (k != kb || out.rows() != m || out.cols() != n) {
    throw DimensionError("gemm: " + shape_string(a) + (trans_a ? "^T" : "") + " x " +
                         shape_string(b) + (trans_b ? "^T" : "") + " -> " + shape_string(out));
  }
}

void check_aggregate_shapes(const Matrix& probs, std::size_t classes, const Matrix& masks,
                            const Matrix& out) {
  if (probs.rows() != masks.rows() || probs.cols() < classes || out.rows() != classes ||
      out.cols() != masks.cols()) {
    throw DimensionError("aggregate_scores: probs " + shape_string(probs) + ", masks " +
                         shape_string(masks) + ", out " + shape_string(out));
  }
}

void check_masked_mean_shapes(const Matrix& select, const Matrix& features, const Matrix& out) {
  if (select.cols() != features.rows() || out.rows() != select.rows() ||
      out.cols() != features.cols()) {
    throw DimensionError("masked_mean: select " + shape_string(select) + ", features " +
                         shape_string(features));
  }
}

}  // namespace detail

namespace serial {

void gemm(const Matrix& a, bool trans_a, const Matrix& b, bool trans_b, Matrix& out,
          bool accumulate) {
  detail::check_gemm_shapes(a, trans_a, b, trans_b, out);
  const std::size_t k_len = trans_a ? a.rows() : a.cols();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) {
      Real s = 0.0;
      for (std::size_t k = 0; k < k_len; ++k) {
        const Real av = trans_a ? a(k, i) : a(i, k);
        const Real bv = trans_b ? b(j, k) : b(k, j);
        s += av * bv;
      }
      out(i, j) = accumulate ? out(i, j) + s : s;
    }
  }
}

void aggregate_scores(const Matrix& probs, std::size_t classes, const Matrix& masks, Matrix& out) {
  detail::check_aggregate_shapes(probs, classes, masks, out);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t p = 0; p < masks.cols(); ++p) {
      Real s = 0.0;
      for (std::size_t i = 0; i < probs.rows(); ++i) s += probs(i, c) * masks(i, p);
      out(c, p) = s;
    }
  }
}

void masked_mean(const Matrix& select, const Matrix& features, Matrix& out) {
  detail::check_masked_mean_shapes(select, features, out);
  const std::size_t dim = features.cols();
  for (std::size_t i = 0; i < select.rows(); ++i) {
    std::size_t count = 0;
    for (std::size_t d = 0; d < dim; ++d) out(i, d) = 0.0;
    for (std::size_t p = 0; p < features.rows(); ++p) {
      if (select(i, p) == 0.0) continue;
      ++count;
      for (std::size_t d = 0; d < dim; ++d) out(i, d) += features(p, d);
    }
    if (count == 0) {
      for (std::size_t p = 0; p < features.rows(); ++p)
        for (std::size_t d = 0; d < dim; ++d) out(i, d) += features(p, d);
      count = features.rows();
    }
    for (std::size_t d = 0; d < dim; ++d) out(i, d) /= static_cast<Real>(count);
  }
}

void confusion(std::span<const int> pred, std::span<const int> gt, int classes,
               std::vector<std::int64_t>& counts) {
  if (pred.size() != gt.size()) throw DimensionError("confusion: label maps differ in size");
  counts.assign(static_cast<std::size_t>(classes) * classes, 0);
  for (std::size_t p = 0; p < pred.size(); ++p) {
    if (pred[p] < 0 || pred[p] >= classes || gt[p] < 0 || gt[p] >= classes) continue;
    ++counts[static_cast<std::size_t>(gt[p]) * classes + pred[p]];
  }
}

}  // namespace serial
}  // namespace frozenseg::kernels
