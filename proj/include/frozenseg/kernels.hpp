#pragma once

// Data-parallel inner loops used by the rest of the library.
//
// Every kernel exists twice: `serial` is the plain reference loop kept for
// testing and benchmarking, `parallel` is the OpenMP version used in
// production paths. Each output element of a parallel kernel is produced by
// exactly one thread in a fixed order, so results do not depend on the
// thread count.

#include <cstdint>
#include <span>
#include <vector>

#include "frozenseg/matrix.hpp"

namespace frozenseg::kernels {

namespace serial {

/// out = op(a) * op(b), or out += op(a) * op(b) when accumulate is set.
/// `out` must already have the result shape.
void gemm(const Matrix& a, bool trans_a, const Matrix& b, bool trans_b, Matrix& out,
          bool accumulate);

/// out(c, p) = sum_i probs(i, c) * masks(i, p) for c < classes. Summation runs
/// over i in ascending order.
void aggregate_scores(const Matrix& probs, std::size_t classes, const Matrix& masks, Matrix& out);

/// Row i of out = mean of feature rows p where select(i, p) != 0; rows with
/// an empty selection receive the mean over all feature rows.
void masked_mean(const Matrix& select, const Matrix& features, Matrix& out);

/// Row-major classes x classes confusion counts indexed (gt, pred). Pixels
/// where either label is outside [0, classes) are skipped.
void confusion(std::span<const int> pred, std::span<const int> gt, int classes,
               std::vector<std::int64_t>& counts);

}  // namespace serial

namespace parallel {

void gemm(const Matrix& a, bool trans_a, const Matrix& b, bool trans_b, Matrix& out,
          bool accumulate);
void aggregate_scores(const Matrix& probs, std::size_t classes, const Matrix& masks, Matrix& out);
void masked_mean(const Matrix& select, const Matrix& features, Matrix& out);
void confusion(std::span<const int> pred, std::span<const int> gt, int classes,
               std::vector<std::int64_t>& counts);

}  // namespace parallel

/// Number of OpenMP threads available (1 when built without OpenMP).
int thread_count();

}  // namespace frozenseg::kernels
