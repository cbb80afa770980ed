#pragma once

#include <complex>
#include <cstdint>
#include <map>
#include <new>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <vector>

#include <fftw3.h>

namespace fibersqz {

using Complex = std::complex<double>;

inline constexpr std::size_t kFftAlignment = 64;

/// Allocator handing out kFftAlignment-aligned storage so FFTW's SIMD
/// codelets apply to every buffer.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{kFftAlignment}));
  }
  void deallocate(T* p, std::size_t) { ::operator delete(p, std::align_val_t{kFftAlignment}); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

/// Field buffer type used on the propagation hot path.
using FieldBuffer = std::vector<Complex, AlignedAllocator<Complex>>;

/// Pair of unnormalized complex FFTW plans of one length.
///
/// Two plan sets exist: SIMD plans for kFftAlignment-aligned buffers and
/// FFTW_UNALIGNED plans for anything else. Each buffer therefore always takes
/// the same code path, and with FFTW_ESTIMATE the plans are identical in every
/// process, which the determinism contract of the ensemble relies on.
/// Plans are in-place only. Execution through the new-array interface is
/// thread-safe; plan creation is serialized by the cache below.
class FftPlan {
 public:
  explicit FftPlan(int n) : n_(n) {
    FieldBuffer scratch(static_cast<std::size_t>(n));
    auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
    // FFTW_BACKWARD carries exp(+i w t): the "to spectrum" direction for
    // envelopes A(t) = (1/2pi) int A(w) exp(-i w t) dw.
    to_spectrum_ = fftw_plan_dft_1d(n, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
    to_time_ = fftw_plan_dft_1d(n, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    to_spectrum_unaligned_ = fftw_plan_dft_1d(n, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    to_time_unaligned_ = fftw_plan_dft_1d(n, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!to_spectrum_ || !to_time_ || !to_spectrum_unaligned_ || !to_time_unaligned_) {
      throw std::runtime_error("FFTW plan creation failed");
    }
  }

  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;

  ~FftPlan() {
    fftw_destroy_plan(to_spectrum_);
    fftw_destroy_plan(to_time_);
    fftw_destroy_plan(to_spectrum_unaligned_);
    fftw_destroy_plan(to_time_unaligned_);
  }

  int size() const { return n_; }

  /// In place: a_k <- sum_j a_j exp(+2 pi i j k / n).
  void to_spectrum(std::span<Complex> data) const {
    check(data);
    fftw_execute_dft(aligned(data) ? to_spectrum_ : to_spectrum_unaligned_, as_fftw(data), as_fftw(data));
  }

  /// In place: a_j <- sum_k a_k exp(-2 pi i j k / n), unnormalized.
  void to_time(std::span<Complex> data) const {
    check(data);
    fftw_execute_dft(aligned(data) ? to_time_ : to_time_unaligned_, as_fftw(data), as_fftw(data));
  }

 private:
  void check(std::span<Complex> data) const {
    if (static_cast<int>(data.size()) != n_) {
      throw std::invalid_argument("FFT buffer length does not match plan");
    }
  }

  static bool aligned(std::span<Complex> s) {
    return reinterpret_cast<std::uintptr_t>(s.data()) % kFftAlignment == 0;
  }

  static fftw_complex* as_fftw(std::span<Complex> s) {
    return reinterpret_cast<fftw_complex*>(s.data());
  }

  int n_;
  fftw_plan to_spectrum_ = nullptr;
  fftw_plan to_time_ = nullptr;
  fftw_plan to_spectrum_unaligned_ = nullptr;
  fftw_plan to_time_unaligned_ = nullptr;
};

/// Process-wide plan cache keyed by transform length.
inline std::shared_ptr<const FftPlan> fft_plan(int n) {
  static std::mutex mutex;
  static std::map<int, std::shared_ptr<const FftPlan>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[n];
  if (!slot) slot = std::make_shared<const FftPlan>(n);
  return slot;
}

}  // namespace fibersqz
