#pragma once

#include <complex>
#include <cstddef>

namespace dcl {

using Complex = std::complex<double>;

/// Aligned buffer suitable for Dft::forward / Dft::inverse.
class FftBuffer {
 public:
  explicit FftBuffer(std::size_t n);
  ~FftBuffer();
  FftBuffer(const FftBuffer&) = delete;
  FftBuffer& operator=(const FftBuffer&) = delete;

  Complex* data() { return data_; }
  const Complex* data() const { return data_; }
  std::size_t size() const { return n_; }

 private:
  Complex* data_ = nullptr;
  std::size_t n_ = 0;
};

/// Length-n complex DFT with globally cached plans (FFTW_ESTIMATE, so plan
/// content is deterministic). Execution is thread safe on distinct buffers.
class Dft {
 public:
  static const Dft& get(int n);

  void forward(FftBuffer& in, FftBuffer& out) const;
  /// Inverse scaled by 1/n, so inverse(forward(x)) == x up to roundoff.
  void inverse(FftBuffer& in, FftBuffer& out) const;
  int size() const { return n_; }

 private:
  explicit Dft(int n);
  int n_;
  void* fwd_plan_;
  void* inv_plan_;
};

}  // namespace dcl
