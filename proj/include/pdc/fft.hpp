// Thin FFTW wrapper: batched one-dimensional transforms along either axis of
// a column-major complex array.
//
// Plans are created once per (rows, cols, axis, sign) under a mutex and then
// executed through the new-array interface, which FFTW documents as thread
// safe. Plans use FFTW_ESTIMATE | FFTW_UNALIGNED so the result does not depend
// on buffer alignment or on planner timing.
#pragma once

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>

#include "pdc/types.hpp"

namespace pdc::fft {

enum class Axis { rows = 0, cols = 1 };

// FFTW_FORWARD uses exp(-2 pi i jk/n), FFTW_BACKWARD exp(+2 pi i jk/n); neither is normalized.
enum class Sign : int { negative = FFTW_FORWARD, positive = FFTW_BACKWARD };

class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  PlanCache(const PlanCache&) = delete;
  PlanCache& operator=(const PlanCache&) = delete;

  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  /// Plan transforming the first `count` columns (Axis::rows, length = rows)
  /// or the first `count` rows (Axis::cols, length = cols) of a rows x cols
  /// column-major array in place.
  fftw_plan get(int rows, int cols, Axis axis, Sign sign, int count) {
    const auto key = std::make_tuple(rows, cols, static_cast<int>(axis), static_cast<int>(sign), count);
    std::lock_guard<std::mutex> lock(mutex_);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;

    auto* scratch = fftw_alloc_complex(static_cast<std::size_t>(rows) * cols);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fftw_plan plan = nullptr;
    if (axis == Axis::rows) {
      int n[] = {rows};
      plan = fftw_plan_many_dft(1, n, count, scratch, nullptr, 1, rows, scratch, nullptr, 1, rows,
                                static_cast<int>(sign), flags);
    } else {
      int n[] = {cols};
      plan = fftw_plan_many_dft(1, n, count, scratch, nullptr, rows, 1, scratch, nullptr, rows, 1,
                                static_cast<int>(sign), flags);
    }
    fftw_free(scratch);
    if (plan == nullptr) throw std::runtime_error("FFTW failed to create a plan");
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  PlanCache() = default;
  std::mutex mutex_;
  std::map<std::tuple<int, int, int, int, int>, fftw_plan> plans_;
};

/// In-place unnormalized transform of a rows x cols column-major block at
/// `data`: its columns (Axis::rows) or rows (Axis::cols). A non-negative
/// `count` restricts the transform to the leading columns/rows.
inline void transform(cplx* data, int rows, int cols, Axis axis, Sign sign, int count = -1) {
  if (rows == 0 || cols == 0) return;
  const int lines = axis == Axis::rows ? cols : rows;
  if (count < 0 || count > lines) count = lines;
  if (count == 0) return;
  fftw_plan plan = PlanCache::instance().get(rows, cols, axis, sign, count);
  auto* d = reinterpret_cast<fftw_complex*>(data);
  fftw_execute_dft(plan, d, d);
}

inline void transform(CMat& a, Axis axis, Sign sign, int count = -1) {
  transform(a.data(), static_cast<int>(a.rows()), static_cast<int>(a.cols()), axis, sign, count);
}

/// In-place unnormalized 2D transform with independent signs per axis.
inline void transform2d(CMat& a, Sign row_axis_sign, Sign col_axis_sign) {
  transform(a, Axis::rows, row_axis_sign);
  transform(a, Axis::cols, col_axis_sign);
}

}  // namespace pdc::fft
