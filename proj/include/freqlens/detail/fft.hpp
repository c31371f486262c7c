#ifndef FREQLENS_DETAIL_FFT_HPP
#define FREQLENS_DETAIL_FFT_HPP

// 2-D complex DFT through FFTW. Plans are built once per (rows, cols,
// direction) and reused with the new-array execute call, which is safe to
// run from several threads at once.

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <span>
#include <tuple>
#include <vector>

namespace freqlens::detail {

using cplx = std::complex<double>;

inline fftw_plan plan_2d(std::size_t rows, std::size_t cols, bool inverse) {
  // The planner itself is not thread-safe.
  static std::mutex mutex;
  static std::map<std::tuple<std::size_t, std::size_t, bool>, fftw_plan> cache;
  std::lock_guard lock(mutex);
  auto& plan = cache[{rows, cols, inverse}];
  if (!plan) {
    std::vector<cplx> scratch(rows * cols);
    auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
    // Caller buffers are plain std::vector storage, so no SIMD alignment
    // can be assumed.
    plan = fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols), buf, buf,
                            inverse ? FFTW_BACKWARD : FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
  }
  return plan;
}

/// In-place 2-D transform of one channel stored row-major in `plane`.
/// The inverse is scaled by 1/(rows*cols).
inline void fft2d(std::span<cplx> plane, std::size_t rows, std::size_t cols, bool inverse) {
  auto* buf = reinterpret_cast<fftw_complex*>(plane.data());
  fftw_execute_dft(plan_2d(rows, cols, inverse), buf, buf);
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(rows * cols);
    for (auto& v : plane) v *= scale;
  }
}

}  // namespace freqlens::detail

#endif  // FREQLENS_DETAIL_FFT_HPP
