#include <vector>

#include "frozenseg/errors.hpp"
#include "frozenseg/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace frozenseg::kernels {

namespace detail {
void check_gemm_shapes(const Matrix& a, bool trans_a, const Matrix& b, bool trans_b,
                       const Matrix& out);
void check_aggregate_shapes(const Matrix& probs, std::size_t classes, const Matrix& masks,
                            const Matrix& out);
void check_masked_mean_shapes(const Matrix& select, const Matrix& features, const Matrix& out);
}  // namespace detail

namespace {
// Below this many multiply-adds the fork/join cost dominates.
constexpr long kParallelWork = 1L << 15;
}  // namespace

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace parallel {

void gemm(const Matrix& a, bool trans_a, const Matrix& b, bool trans_b, Matrix& out,
          bool accumulate) {
  detail::check_gemm_shapes(a, trans_a, b, trans_b, out);
  const long m = static_cast<long>(out.rows());
  const std::size_t n = out.cols();
  const std::size_t k_len = trans_a ? a.rows() : a.cols();
  const long work = m * static_cast<long>(n * k_len);
  const Real* ad = a.data().data();
  const Real* bd = b.data().data();
  const std::size_t a_cols = a.cols();
  const std::size_t b_cols = b.cols();

#pragma omp parallel if (work > kParallelWork)
  {
    std::vector<Real> acc(n);
#pragma omp for schedule(static)
    for (long ii = 0; ii < m; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      std::fill(acc.begin(), acc.end(), 0.0);
      if (trans_b) {
        // rows of a and rows of b are both contiguous: dot products
        for (std::size_t j = 0; j < n; ++j) {
          Real s = 0.0;
          const Real* brow = bd + j * b_cols;
          for (std::size_t k = 0; k < k_len; ++k) {
            const Real av = trans_a ? ad[k * a_cols + i] : ad[i * a_cols + k];
            s += av * brow[k];
          }
          acc[j] = s;
        }
      } else {
        for (std::size_t k = 0; k < k_len; ++k) {
          const Real av = trans_a ? ad[k * a_cols + i] : ad[i * a_cols + k];
          if (av == 0.0) continue;
          const Real* brow = bd + k * b_cols;
          for (std::size_t j = 0; j < n; ++j) acc[j] += av * brow[j];
        }
      }
      auto orow = out.row(i);
      if (accumulate) {
        for (std::size_t j = 0; j < n; ++j) orow[j] += acc[j];
      } else {
        std::copy(acc.begin(), acc.end(), orow.begin());
      }
    }
  }
}

void aggregate_scores(const Matrix& probs, std::size_t classes, const Matrix& masks, Matrix& out) {
  detail::check_aggregate_shapes(probs, classes, masks, out);
  const long rows = static_cast<long>(classes);
  const long work = rows * static_cast<long>(masks.cols() * masks.rows());
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (long cc = 0; cc < rows; ++cc) {
    const auto c = static_cast<std::size_t>(cc);
    auto orow = out.row(c);
    std::fill(orow.begin(), orow.end(), 0.0);
    for (std::size_t i = 0; i < probs.rows(); ++i) {
      const Real w = probs(i, c);
      auto mrow = masks.row(i);
      for (std::size_t p = 0; p < mrow.size(); ++p) orow[p] += w * mrow[p];
    }
  }
}

void masked_mean(const Matrix& select, const Matrix& features, Matrix& out) {
  detail::check_masked_mean_shapes(select, features, out);
  const long rows = static_cast<long>(select.rows());
  const std::size_t dim = features.cols();
  const long work = rows * static_cast<long>(features.size());
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (long ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    auto orow = out.row(i);
    std::fill(orow.begin(), orow.end(), 0.0);
    std::size_t count = 0;
    auto sel = select.row(i);
    for (std::size_t p = 0; p < sel.size(); ++p) {
      if (sel[p] == 0.0) continue;
      ++count;
      auto f = features.row(p);
      for (std::size_t d = 0; d < dim; ++d) orow[d] += f[d];
    }
    if (count == 0) {
      for (std::size_t p = 0; p < features.rows(); ++p) {
        auto f = features.row(p);
        for (std::size_t d = 0; d < dim; ++d) orow[d] += f[d];
      }
      count = features.rows();
    }
    for (auto& v : orow) v /= static_cast<Real>(count);
  }
}

void confusion(std::span<const int> pred, std::span<const int> gt, int classes,
               std::vector<std::int64_t>& counts) {
  if (pred.size() != gt.size()) throw DimensionError("confusion: label maps differ in size");
  const std::size_t cells = static_cast<std::size_t>(classes) * classes;
  counts.assign(cells, 0);
  const long n = static_cast<long>(pred.size());
#pragma omp parallel if (n > kParallelWork)
  {
    std::vector<std::int64_t> local(cells, 0);
#pragma omp for schedule(static) nowait
    for (long p = 0; p < n; ++p) {
      const int pv = pred[p];
      const int gv = gt[p];
      if (pv < 0 || pv >= classes || gv < 0 || gv >= classes) continue;
      ++local[static_cast<std::size_t>(gv) * classes + pv];
    }
#pragma omp critical
    for (std::size_t c = 0; c < cells; ++c) counts[c] += local[c];
  }
}

}  // namespace parallel
}  // namespace frozenseg::kernels
