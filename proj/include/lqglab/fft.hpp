#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <mutex>
#include <span>

#include "errors.hpp"

namespace lqglab {

namespace detail {
// The FFTW planner is not re-entrant.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

/// In-place forward 2D DFT over an owned rows x cols complex buffer.
class Fft2d {
 public:
  Fft2d(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {
    data_ = fftw_alloc_complex(rows * cols);
    if (data_ == nullptr) throw NumericalError("Fft2d: allocation failed");
    std::lock_guard lock(detail::fftw_planner_mutex());
    plan_ = fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols), data_, data_,
                             FFTW_FORWARD, FFTW_ESTIMATE);
    if (plan_ == nullptr) {
      fftw_free(data_);
      throw NumericalError("Fft2d: plan creation failed");
    }
  }
  Fft2d(const Fft2d&) = delete;
  Fft2d& operator=(const Fft2d&) = delete;
  ~Fft2d() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(plan_);
    fftw_free(data_);
  }

  std::span<std::complex<double>> data() {
    return {reinterpret_cast<std::complex<double>*>(data_), rows_ * cols_};
  }
  void execute() { fftw_execute(plan_); }
  [[nodiscard]] std::size_t rows() const { return rows_; }
  [[nodiscard]] std::size_t cols() const { return cols_; }

 private:
  std::size_t rows_;
  std::size_t cols_;
  fftw_complex* data_ = nullptr;
  fftw_plan plan_ = nullptr;
};

}  // namespace lqglab
