#include "dcl/fft.hpp"

#include <fftw3.h>

#include <map>
#include <memory>
#include <mutex>

#include "dcl/error.hpp"

namespace dcl {

FftBuffer::FftBuffer(std::size_t n) : n_(n) {
  data_ = reinterpret_cast<Complex*>(fftw_malloc(sizeof(Complex) * n));
  if (!data_) {
    fail(ErrorCode::Config, "FftBuffer: allocation failed");
  }
  for (std::size_t i = 0; i < n; ++i) data_[i] = Complex(0.0, 0.0);
}

FftBuffer::~FftBuffer() { fftw_free(data_); }

namespace {
std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

Dft::Dft(int n) : n_(n) {
  FftBuffer in(n), out(n);
  std::lock_guard<std::mutex> lock(plan_mutex());
  fwd_plan_ = fftw_plan_dft_1d(n, reinterpret_cast<fftw_complex*>(in.data()),
                               reinterpret_cast<fftw_complex*>(out.data()),
                               FFTW_FORWARD, FFTW_ESTIMATE);
  inv_plan_ = fftw_plan_dft_1d(n, reinterpret_cast<fftw_complex*>(in.data()),
                               reinterpret_cast<fftw_complex*>(out.data()),
                               FFTW_BACKWARD, FFTW_ESTIMATE);
}

const Dft& Dft::get(int n) {
  if (n < 2) {
    fail(ErrorCode::Config, "Dft: length must be >= 2");
  }
  static std::mutex cache_mutex;
  static std::map<int, std::unique_ptr<Dft>> cache;
  std::lock_guard<std::mutex> lock(cache_mutex);
  auto it = cache.find(n);
  if (it == cache.end()) {
    it = cache.emplace(n, std::unique_ptr<Dft>(new Dft(n))).first;
  }
  return *it->second;
}

void Dft::forward(FftBuffer& in, FftBuffer& out) const {
  fftw_execute_dft(static_cast<fftw_plan>(fwd_plan_),
                   reinterpret_cast<fftw_complex*>(in.data()),
                   reinterpret_cast<fftw_complex*>(out.data()));
}

void Dft::inverse(FftBuffer& in, FftBuffer& out) const {
  fftw_execute_dft(static_cast<fftw_plan>(inv_plan_),
                   reinterpret_cast<fftw_complex*>(in.data()),
                   reinterpret_cast<fftw_complex*>(out.data()));
  const double scale = 1.0 / n_;
  for (int i = 0; i < n_; ++i) out.data()[i] *= scale;
}

}  // namespace dcl
