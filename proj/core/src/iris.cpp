#include "dcl/iris.hpp"

#include <bit>
#include <cmath>

#include "dcl/error.hpp"
#include "dcl/fft.hpp"

namespace dcl {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

void check_config(const IrisConfig& cfg) {
  if (cfg.n_r < 1 || cfg.n_a < 2 || cfg.r_max <= 0 || cfg.z_min >= cfg.z_max) {
    fail(ErrorCode::Config, "invalid iris configuration");
  }
}

}  // namespace

IrisImage make_iris_image(const PointCloud& scan, const IrisConfig& cfg) {
  check_config(cfg);
  IrisImage img;
  img.n_r = cfg.n_r;
  img.n_a = cfg.n_a;
  img.codes.assign(static_cast<std::size_t>(cfg.n_r) * cfg.n_a, 0);
  const double z_span = cfg.z_max - cfg.z_min;
  for (const Vec3& p : scan.points) {
    const double range = std::hypot(p.x(), p.y());
    if (range > cfg.r_max) continue;
    if (p.z() < cfg.z_min || p.z() > cfg.z_max) continue;
    int ring = static_cast<int>(range / cfg.r_max * cfg.n_r);
    ring = std::min(ring, cfg.n_r - 1);
    const double azimuth = std::atan2(p.y(), p.x());  // (-pi, pi]
    int col = static_cast<int>((azimuth + kPi) / kTwoPi * cfg.n_a);
    col = ((col % cfg.n_a) + cfg.n_a) % cfg.n_a;
    int slice = static_cast<int>((p.z() - cfg.z_min) / z_span * 8.0);
    slice = std::min(slice, 7);
    img.at(ring, col) |= static_cast<std::uint8_t>(1u << slice);
  }
  return img;
}

LogGaborBank::LogGaborBank(int n_a, const GaborConfig& cfg)
    : n_a_(n_a), cfg_(cfg) {
  if (n_a < 2 || cfg.sigma_ratio <= 0.0 || cfg.sigma_ratio >= 1.0) {
    fail(ErrorCode::Config, "invalid LoG-Gabor parameters");
  }
  for (std::size_t i = 0; i < cfg.wavelengths.size(); ++i) {
    if (cfg.wavelengths[i] <= 0.0) {
      fail(ErrorCode::Config, "LoG-Gabor wavelengths must be positive");
    }
    for (std::size_t j = i + 1; j < cfg.wavelengths.size(); ++j) {
      if (cfg.wavelengths[i] == cfg.wavelengths[j]) {
        fail(ErrorCode::Config, "LoG-Gabor wavelengths must be distinct");
      }
    }
  }
  for (int k = 0; k < 4; ++k) {
    grid_[k].resize(n_a / 2 + 1);
    for (int u = 0; u <= n_a / 2; ++u) {
      grid_[k][u] = response(k, kTwoPi * u / n_a);
    }
  }
}

double LogGaborBank::response(int k, double omega) const {
  if (omega <= 0.0) return 0.0;  // hard zero at DC
  const double omega0 = kTwoPi / cfg_.wavelengths[static_cast<std::size_t>(k)];
  const double num = std::log(omega / omega0);
  const double den = std::log(cfg_.sigma_ratio);
  return std::exp(-(num * num) / (2.0 * den * den));
}

LogGaborBank make_log_gabor_bank(int n_a, const GaborConfig& cfg) {
  return LogGaborBank(n_a, cfg);
}

std::vector<double> compute_row_key(const IrisImage& image) {
  std::vector<double> key(image.n_r, 0.0);
  for (int r = 0; r < image.n_r; ++r) {
    // Codes are 8-bit integers, so the sum of squares is exact and the key
    // is bit-identical under any column permutation.
    std::uint64_t sum_sq = 0;
    for (int c = 0; c < image.n_a; ++c) {
      const std::uint64_t v = image.at(r, c);
      sum_sq += v * v;
    }
    key[r] = std::sqrt(static_cast<double>(sum_sq));
  }
  return key;
}

BinaryFeatureImage binarize_features(const IrisImage& image,
                                     const LogGaborBank& bank) {
  if (bank.n_a() != image.n_a) {
    fail(ErrorCode::Config, "binarize_features: bank length mismatch");
  }
  const int n = image.n_a;
  BinaryFeatureImage out;
  out.n_r = image.n_r;
  out.n_a = n;
  out.words_per_row = (n + 63) / 64;
  for (int p = 0; p < 4; ++p) {
    out.planes[p].assign(
        static_cast<std::size_t>(image.n_r) * out.words_per_row, 0);
    out.col_sums[p].assign(n, 0);
  }
  const Dft& dft = Dft::get(n);
  FftBuffer row(n), spectrum(n), filtered(n), response(n);
  for (int r = 0; r < image.n_r; ++r) {
    for (int c = 0; c < n; ++c) {
      row.data()[c] = Complex(static_cast<double>(image.at(r, c)), 0.0);
    }
    dft.forward(row, spectrum);
    for (int p = 0; p < 4; ++p) {
      // One-sided (analytic) filtering: negative frequencies and DC zeroed.
      filtered.data()[0] = Complex(0.0, 0.0);
      for (int u = 1; u <= n / 2; ++u) {
        filtered.data()[u] = spectrum.data()[u] * bank.grid(p, u);
      }
      for (int u = n / 2 + 1; u < n; ++u) {
        filtered.data()[u] = Complex(0.0, 0.0);
      }
      dft.inverse(filtered, response);
      for (int c = 0; c < n; ++c) {
        if (response.data()[c].real() > 0.0) {
          out.planes[p][r * out.words_per_row + c / 64] |= 1ull << (c % 64);
          out.col_sums[p][c] += 1;
        }
      }
    }
  }
  return out;
}

namespace {

void check_match(const BinaryFeatureImage& a, const BinaryFeatureImage& b) {
  if (a.n_r != b.n_r || a.n_a != b.n_a) {
    fail(ErrorCode::Config, "feature image dimension mismatch");
  }
}

// Integer cross-correlation of the plane column sums at every shift;
// exact argmax with ties to the smallest shift.
ShiftResult brute_force_shift(const BinaryFeatureImage& a,
                              const BinaryFeatureImage& b) {
  const int n = a.n_a;
  std::int64_t best = -1;
  int best_shift = 0;
  for (int k = 0; k < n; ++k) {
    std::int64_t corr = 0;
    for (int p = 0; p < 4; ++p) {
      const auto& ca = a.col_sums[p];
      const auto& cb = b.col_sums[p];
      for (int j = 0; j < n; ++j) {
        int jb = j + k;
        if (jb >= n) jb -= n;
        corr += static_cast<std::int64_t>(ca[j]) * cb[jb];
      }
    }
    if (corr > best) {
      best = corr;
      best_shift = k;
    }
  }
  ShiftResult res;
  res.shift = best_shift;
  res.score = static_cast<double>(best);
  res.brute_forced = true;
  return res;
}

}  // namespace

ShiftResult estimate_shift(const BinaryFeatureImage& a,
                           const BinaryFeatureImage& b) {
  check_match(a, b);
  const int n = a.n_a;
  const Dft& dft = Dft::get(n);
  FftBuffer in(n), fa(n), fb(n), cross(n), corr(n);
  for (int u = 0; u < n; ++u) cross.data()[u] = Complex(0.0, 0.0);
  for (int p = 0; p < 4; ++p) {
    for (int j = 0; j < n; ++j) {
      in.data()[j] = Complex(static_cast<double>(a.col_sums[p][j]), 0.0);
    }
    dft.forward(in, fa);
    for (int j = 0; j < n; ++j) {
      in.data()[j] = Complex(static_cast<double>(b.col_sums[p][j]), 0.0);
    }
    dft.forward(in, fb);
    for (int u = 0; u < n; ++u) {
      cross.data()[u] += fb.data()[u] * std::conj(fa.data()[u]);
    }
  }
  // Normalized cross-power spectrum, DC excluded so constant offsets do not
  // bias the peak.
  cross.data()[0] = Complex(0.0, 0.0);
  for (int u = 1; u < n; ++u) {
    const double mag = std::abs(cross.data()[u]);
    cross.data()[u] = mag > 1e-12 ? cross.data()[u] / mag : Complex(0.0, 0.0);
  }
  dft.inverse(cross, corr);
  int peak_idx = 0;
  double peak = -1.0;
  for (int m = 0; m < n; ++m) {
    const double v = corr.data()[m].real();
    if (v > peak) {
      peak = v;
      peak_idx = m;
    }
  }
  double second = 0.0;
  for (int m = 0; m < n; ++m) {
    int d = std::abs(m - peak_idx);
    d = std::min(d, n - d);
    if (d > 2) {
      second = std::max(second, corr.data()[m].real());
    }
  }
  const double ratio = peak / std::max(second, 1e-12);
  if (peak < 1e-6 || ratio < 1.2) {
    return brute_force_shift(a, b);
  }
  ShiftResult res;
  res.shift = peak_idx;
  res.score = peak;
  return res;
}

namespace {

// Appends nbits (<= 64) of word at an arbitrary bit position.
struct BitWriter {
  std::uint64_t* buf;
  int pos = 0;
  void append(std::uint64_t word, int nbits) {
    const int w = pos / 64;
    const int o = pos % 64;
    buf[w] |= word << o;
    if (o != 0 && o + nbits > 64) {
      buf[w + 1] |= word >> (64 - o);
    }
    pos += nbits;
  }
};

}  // namespace

std::int64_t hamming_at_shift(const BinaryFeatureImage& a,
                              const BinaryFeatureImage& b, int shift) {
  check_match(a, b);
  const int n = a.n_a;
  const int words = a.words_per_row;
  shift = ((shift % n) + n) % n;
  const int word_off = shift / 64;
  const int bit_off = shift % 64;
  const int tail_bits = n - 64 * (words - 1);
  const std::uint64_t tail_mask =
      tail_bits == 64 ? ~0ull : ((1ull << tail_bits) - 1);
  std::int64_t count = 0;
  // Two wrapped copies of one row of b, so the circular window starting at
  // `shift` is a pair of aligned word reads.
  std::vector<std::uint64_t> doubled(2 * words + 1);
  for (int p = 0; p < 4; ++p) {
    for (int r = 0; r < a.n_r; ++r) {
      const std::uint64_t* wa = &a.planes[p][r * words];
      const std::uint64_t* wb = &b.planes[p][r * words];
      std::fill(doubled.begin(), doubled.end(), 0ull);
      BitWriter writer{doubled.data()};
      for (int copy = 0; copy < 2; ++copy) {
        for (int w = 0; w < words - 1; ++w) {
          writer.append(wb[w], 64);
        }
        writer.append(wb[words - 1] & tail_mask, tail_bits);
      }
      for (int w = 0; w < words; ++w) {
        const std::uint64_t lo = doubled[word_off + w];
        const std::uint64_t hi = doubled[word_off + w + 1];
        const std::uint64_t shifted =
            bit_off == 0 ? lo : (lo >> bit_off) | (hi << (64 - bit_off));
        std::uint64_t diff = wa[w] ^ shifted;
        if (w == words - 1) diff &= tail_mask;
        count += std::popcount(diff);
      }
    }
  }
  return count;
}

IrisDistance iris_distance(const IrisDescriptor& a, const IrisDescriptor& b) {
  const ShiftResult s = estimate_shift(a.features, b.features);
  IrisDistance d;
  d.shift = s.shift;
  d.distance = static_cast<double>(
                   hamming_at_shift(a.features, b.features, s.shift)) /
               static_cast<double>(a.features.total_bits());
  return d;
}

IrisEncoder::IrisEncoder(const IrisConfig& cfg, const GaborConfig& gabor)
    : cfg_(cfg), bank_(cfg.n_a, gabor) {
  check_config(cfg);
}

IrisDescriptor IrisEncoder::describe(const PointCloud& scan) const {
  return from_image(make_iris_image(scan, cfg_));
}

IrisDescriptor IrisEncoder::from_image(IrisImage image) const {
  IrisDescriptor d;
  d.row_key = compute_row_key(image);
  d.features = binarize_features(image, bank_);
  d.image = std::move(image);
  return d;
}

}  // namespace dcl
