#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "dcl/cloud.hpp"

namespace dcl {

struct IrisConfig {
  int n_r = 80;
  int n_a = 360;
  double r_max = 80.0;   // meters; points beyond are discarded
  double z_min = -1.0;   // meters; height slice range for the 8-bit code
  double z_max = 7.0;

  bool operator==(const IrisConfig&) const = default;
};

/// Bird's-eye height image. codes is row-major n_r x n_a; bit k of a code is
/// set when some point of that bin falls in the k-th of 8 equal height slices
/// of [z_min, z_max].
struct IrisImage {
  int n_r = 0;
  int n_a = 0;
  std::vector<std::uint8_t> codes;

  std::uint8_t at(int r, int c) const { return codes[r * n_a + c]; }
  std::uint8_t& at(int r, int c) { return codes[r * n_a + c]; }
};

IrisImage make_iris_image(const PointCloud& scan, const IrisConfig& cfg);

struct GaborConfig {
  std::array<double, 4> wavelengths = {18.0, 36.0, 72.0, 144.0};  // columns
  double sigma_ratio = 0.5;  // sigma / omega_0

  bool operator==(const GaborConfig&) const = default;
};

/// Four 1-D LoG-Gabor filters sampled on the length-n_a DFT grid, applied
/// one-sided (analytic response). DC response is identically zero.
class LogGaborBank {
 public:
  LogGaborBank() = default;
  LogGaborBank(int n_a, const GaborConfig& cfg);

  /// Closed-form frequency response of filter k at angular frequency omega.
  double response(int k, double omega) const;
  /// Sampled response at non-negative DFT bin u (0..n_a/2).
  double grid(int k, int u) const { return grid_[k][u]; }
  int n_a() const { return n_a_; }
  const GaborConfig& config() const { return cfg_; }

 private:
  int n_a_ = 0;
  GaborConfig cfg_;
  std::array<std::vector<double>, 4> grid_;
};

LogGaborBank make_log_gabor_bank(int n_a, const GaborConfig& cfg = {});

/// Sign bits of the four filter responses, packed 64 columns per word, plus
/// per-plane column sums used by shift estimation.
struct BinaryFeatureImage {
  int n_r = 0;
  int n_a = 0;
  int words_per_row = 0;
  std::array<std::vector<std::uint64_t>, 4> planes;  // n_r * words_per_row
  std::array<std::vector<std::uint16_t>, 4> col_sums;

  bool bit(int plane, int r, int c) const {
    return (planes[plane][r * words_per_row + c / 64] >> (c % 64)) & 1u;
  }
  std::int64_t total_bits() const {
    return static_cast<std::int64_t>(4) * n_r * n_a;
  }
};

BinaryFeatureImage binarize_features(const IrisImage& image,
                                     const LogGaborBank& bank);

/// Per-row L2 norm of the 8-bit codes; invariant to circular column shifts.
std::vector<double> compute_row_key(const IrisImage& image);

struct ShiftResult {
  int shift = 0;      // columns, in [0, n_a)
  double score = 0.0; // correlation peak value
  bool brute_forced = false;
};

/// Best circular column alignment of b against a: for b(j) = a(j - k) the
/// result is k. Phase correlation over plane column sums first; direct
/// integer cross-correlation over all shifts when the peak ratio is below
/// 1.2. Throws on dimension mismatch.
ShiftResult estimate_shift(const BinaryFeatureImage& a,
                           const BinaryFeatureImage& b);

/// Hamming count between a and b with b's columns read at offset +shift.
std::int64_t hamming_at_shift(const BinaryFeatureImage& a,
                              const BinaryFeatureImage& b, int shift);

struct IrisDescriptor {
  IrisImage image;
  std::vector<double> row_key;
  BinaryFeatureImage features;  // computed locally, never transmitted
};

struct IrisDistance {
  double distance = 0.0;  // normalized Hamming in [0, 1]
  int shift = 0;
};

IrisDistance iris_distance(const IrisDescriptor& a, const IrisDescriptor& b);

/// Scan -> descriptor with a shared filter bank.
class IrisEncoder {
 public:
  explicit IrisEncoder(const IrisConfig& cfg = {}, const GaborConfig& gabor = {});

  IrisDescriptor describe(const PointCloud& scan) const;
  /// Rebuilds features and row key for an image received over the wire.
  IrisDescriptor from_image(IrisImage image) const;

  const IrisConfig& config() const { return cfg_; }
  const LogGaborBank& bank() const { return bank_; }

 private:
  IrisConfig cfg_;
  LogGaborBank bank_;
};

}  // namespace dcl
