#ifndef FREQLENS_SPECTRAL_HPP
#define FREQLENS_SPECTRAL_HPP

// Images, center-shifted 2-D spectra, radial frequency bands and band masking.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "freqlens/detail/fft.hpp"
#include "freqlens/error.hpp"

namespace freqlens {

using Complex = std::complex<double>;

struct Extent {
  int height = 0;
  int width = 0;

  friend bool operator==(const Extent&, const Extent&) = default;
};

inline std::string to_string(Extent e) {
  return std::to_string(e.height) + "x" + std::to_string(e.width);
}

namespace detail {

inline void check_dims(int height, int width, int channels) {
  if (height < 2 || width < 2) {
    throw Error(ErrorKind::kInvalidInput,
                "image dimensions must be at least 2x2, got " +
                    std::to_string(height) + "x" + std::to_string(width));
  }
  if (channels != 1 && channels != 3) {
    throw Error(ErrorKind::kInvalidInput,
                "channel count must be 1 or 3, got " + std::to_string(channels));
  }
}

/// Row-major H x W x C tensor.
template <typename T>
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(int height, int width, int channels)
      : height_(height), width_(width), channels_(channels) {
    check_dims(height, width, channels);
    data_.assign(static_cast<std::size_t>(height) * width * channels, T{});
  }
  Tensor3(int height, int width, int channels, std::vector<T> data)
      : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    check_dims(height, width, channels);
    if (data_.size() != static_cast<std::size_t>(height) * width * channels) {
      throw Error(ErrorKind::kInvalidInput, "tensor payload size does not match dimensions");
    }
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  Extent extent() const { return {height_, width_}; }
  std::size_t size() const { return data_.size(); }

  T& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  const T& at(int y, int x, int c) const { return data_[index(y, x, c)]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

}  // namespace detail

/// Spatial-domain image. Pipeline images are 112x112x3 in [-1, 1], but any
/// finite values are accepted (masked reconstructions may overshoot).
using Image = detail::Tensor3<double>;

/// Center-shifted spectrum: the DC coefficient sits at (H/2, W/2).
class Spectrum : public detail::Tensor3<Complex> {
 public:
  Spectrum() = default;
  Spectrum(int height, int width, int channels, bool conjugate_symmetric = false)
      : Tensor3(height, width, channels), conjugate_symmetric_(conjugate_symmetric) {}

  /// True when the coefficients came from a real image through operations
  /// that keep X(f) = conj(X(-f)); the inverse transform then verifies it.
  bool conjugate_symmetric() const { return conjugate_symmetric_; }
  void set_conjugate_symmetric(bool value) { conjugate_symmetric_ = value; }

 private:
  bool conjugate_symmetric_ = false;
};

inline void require_finite(const Image& image) {
  for (double v : image.values()) {
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::kInvalidInput, "image contains non-finite pixel values");
    }
  }
}

namespace detail {

inline std::size_t mirror_index(std::size_t flat, std::size_t rows, std::size_t cols) {
  const std::size_t r = flat / cols;
  const std::size_t c = flat % cols;
  return ((rows - r) % rows) * cols + (cols - c) % cols;
}

}  // namespace detail

/// Per-channel 2-D DFT followed by a center shift. Two real channels share
/// one complex transform: z = a + ib gives A = (Z + conj Z~)/2 and
/// B = (Z - conj Z~)/2i, where Z~ is Z at the negated frequency.
inline Spectrum forward_dft(const Image& image) {
  require_finite(image);
  const std::size_t h = image.height();
  const std::size_t w = image.width();
  const int ch = image.channels();
  Spectrum out(image.height(), image.width(), ch, true);
  std::vector<Complex> plane(h * w);
  auto store = [&](int c, std::size_t flat, Complex value) {
    const std::size_t ky = flat / w;
    const std::size_t kx = flat % w;
    out.at(static_cast<int>((ky + h / 2) % h), static_cast<int>((kx + w / 2) % w), c) = value;
  };
  for (int c = 0; c < ch; c += 2) {
    const bool paired = c + 1 < ch;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const int yi = static_cast<int>(y);
        const int xi = static_cast<int>(x);
        plane[y * w + x] = Complex(image.at(yi, xi, c), paired ? image.at(yi, xi, c + 1) : 0.0);
      }
    }
    detail::fft2d(plane, h, w, false);
    for (std::size_t k = 0; k < h * w; ++k) {
      const Complex z = plane[k];
      const Complex zm = std::conj(plane[detail::mirror_index(k, h, w)]);
      store(c, k, 0.5 * (z + zm));
      if (paired) {
        const Complex d = 0.5 * (z - zm);
        store(c + 1, k, Complex(d.imag(), -d.real()));
      }
    }
  }
  return out;
}

/// Largest imaginary magnitude tolerated when collapsing a conjugate-symmetric
/// spectrum back to a real image, relative to max(1, peak real magnitude).
inline constexpr double kImaginaryResidueTolerance = 1e-6;

inline Image inverse_dft(const Spectrum& spectrum) {
  const std::size_t h = spectrum.height();
  const std::size_t w = spectrum.width();
  const int ch = spectrum.channels();
  Image out(spectrum.height(), spectrum.width(), ch);

  std::vector<std::vector<Complex>> planes(ch, std::vector<Complex>(h * w));
  for (int c = 0; c < ch; ++c) {
    for (std::size_t u = 0; u < h; ++u) {
      const std::size_t ky = (u + h - h / 2) % h;
      for (std::size_t v = 0; v < w; ++v) {
        const std::size_t kx = (v + w - w / 2) % w;
        planes[c][ky * w + kx] = spectrum.at(static_cast<int>(u), static_cast<int>(v), c);
      }
    }
  }

  // Upper bound on each channel's imaginary residue: the antisymmetric part
  // (X - conj X~)/2 has an inverse no larger than its l1 norm / (h * w),
  // and |re| + |im| bounds each modulus.
  std::vector<double> residue_bound(ch, 0.0);
  for (int c = 0; c < ch; ++c) {
    double sum = 0.0;
    for (std::size_t k = 0; k < h * w; ++k) {
      const Complex d = planes[c][k] - std::conj(planes[c][detail::mirror_index(k, h, w)]);
      sum += std::abs(d.real()) + std::abs(d.imag());
    }
    residue_bound[c] = 0.5 * sum / static_cast<double>(h * w);
  }

  std::vector<Complex> plane(h * w);
  double max_imag = 0.0;
  double max_real = 0.0;
  for (int c = 0; c < ch; c += 2) {
    // Pack a second channel only when both are symmetric enough that the
    // cross-talk (each channel's residue) stays under tolerance.
    const bool paired = c + 1 < ch && residue_bound[c] <= kImaginaryResidueTolerance &&
                        residue_bound[c + 1] <= kImaginaryResidueTolerance;
    for (std::size_t k = 0; k < h * w; ++k) {
      plane[k] = paired ? planes[c][k] + Complex(0.0, 1.0) * planes[c + 1][k] : planes[c][k];
    }
    detail::fft2d(plane, h, w, true);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const Complex z = plane[y * w + x];
        const int yi = static_cast<int>(y);
        const int xi = static_cast<int>(x);
        out.at(yi, xi, c) = z.real();
        max_real = std::max(max_real, std::abs(z.real()));
        if (paired) {
          out.at(yi, xi, c + 1) = z.imag();
          max_real = std::max(max_real, std::abs(z.imag()));
        } else {
          max_imag = std::max(max_imag, std::abs(z.imag()));
        }
      }
    }
    if (paired) {
      max_imag = std::max({max_imag, residue_bound[c], residue_bound[c + 1]});
    } else if (c + 1 < ch) {
      --c;  // the unpaired partner is transformed on its own next
    }
  }
  if (spectrum.conjugate_symmetric() &&
      max_imag > kImaginaryResidueTolerance * std::max(1.0, max_real)) {
    throw Error(ErrorKind::kSymmetryViolation,
                "inverse transform left an imaginary residue of " + std::to_string(max_imag));
  }
  return out;
}

/// Radial decomposition of the shifted frequency grid into rings of width
/// `band_size` around the DC index. Immutable after construction.
class BandPartition {
 public:
  BandPartition(int height, int width, double band_size)
      : height_(height), width_(width), band_size_(band_size) {
    if (!(band_size > 0.0) || !std::isfinite(band_size)) {
      throw Error(ErrorKind::kInvalidConfig,
                  "band size must be a positive finite number, got " + std::to_string(band_size));
    }
    if (height < 2 || width < 2) {
      throw Error(ErrorKind::kInvalidConfig, "partition grid must be at least 2x2");
    }
    const int cy = height / 2;
    const int cx = width / 2;
    band_map_.resize(static_cast<std::size_t>(height) * width);
    int max_band = 0;
    for (int u = 0; u < height; ++u) {
      for (int v = 0; v < width; ++v) {
        const double dy = u - cy;
        const double dx = v - cx;
        const int band = static_cast<int>(std::floor(std::sqrt(dy * dy + dx * dx) / band_size));
        band_map_[static_cast<std::size_t>(u) * width + v] = band;
        max_band = std::max(max_band, band);
      }
    }
    num_bands_ = max_band + 1;
    members_.resize(num_bands_);
    for (std::size_t i = 0; i < band_map_.size(); ++i) {
      members_[band_map_[i]].push_back(i);
    }
  }

  int height() const { return height_; }
  int width() const { return width_; }
  Extent extent() const { return {height_, width_}; }
  double band_size() const { return band_size_; }
  int num_bands() const { return num_bands_; }

  int band_of(int u, int v) const { return band_map_[static_cast<std::size_t>(u) * width_ + v]; }
  std::span<const int> band_index_map() const { return band_map_; }

  /// Flat (u * width + v) indices of the coordinates in `band`.
  std::span<const std::size_t> members(int band) const { return members_.at(band); }

 private:
  int height_;
  int width_;
  double band_size_;
  int num_bands_ = 0;
  std::vector<int> band_map_;
  std::vector<std::vector<std::size_t>> members_;
};

inline BandPartition build_partition(int height, int width, double band_size) {
  return BandPartition(height, width, band_size);
}

class BandMask {
 public:
  BandMask(const BandPartition& partition, int band) : partition_(&partition), band_(band) {
    if (band < 0 || band >= partition.num_bands()) {
      throw Error(ErrorKind::kInvalidInput,
                  "band " + std::to_string(band) + " outside [0, " +
                      std::to_string(partition.num_bands()) + ")");
    }
  }

  const BandPartition& partition() const { return *partition_; }
  int band() const { return band_; }

 private:
  const BandPartition* partition_;
  int band_;
};

namespace detail {

inline void require_match(Extent got, const BandPartition& partition, const char* what) {
  if (got != partition.extent()) {
    throw Error(ErrorKind::kInvalidInput, std::string(what) + " is " + to_string(got) +
                                              " but partition expects " +
                                              to_string(partition.extent()));
  }
}

}  // namespace detail

/// Zeroes every coefficient of `mask.band()` in all channels. Radial bands are
/// point-symmetric about DC, so conjugate symmetry is preserved.
inline Spectrum mask_spectrum(Spectrum spectrum, const BandMask& mask) {
  detail::require_match(spectrum.extent(), mask.partition(), "spectrum");
  const int ch = spectrum.channels();
  auto values = spectrum.values();
  for (std::size_t flat : mask.partition().members(mask.band())) {
    for (int c = 0; c < ch; ++c) values[flat * ch + c] = Complex{};
  }
  return spectrum;
}

/// iDFT(M_b x DFT(image)).
inline Image mask_band(const Image& image, const BandMask& mask) {
  detail::require_match(image.extent(), mask.partition(), "image");
  return inverse_dft(mask_spectrum(forward_dft(image), mask));
}

/// All B masked versions of `image`, sharing one forward transform.
inline std::vector<Image> mask_every_band(const Image& image, const BandPartition& partition) {
  detail::require_match(image.extent(), partition, "image");
  const Spectrum spectrum = forward_dft(image);
  std::vector<Image> out;
  out.reserve(partition.num_bands());
  for (int b = 0; b < partition.num_bands(); ++b) {
    out.push_back(inverse_dft(mask_spectrum(spectrum, BandMask(partition, b))));
  }
  return out;
}

/// Sum of |X|^2 over each band's coordinates, all channels.
inline std::vector<double> band_energy(const Spectrum& spectrum, const BandPartition& partition) {
  detail::require_match(spectrum.extent(), partition, "spectrum");
  const int ch = spectrum.channels();
  const auto values = spectrum.values();
  std::vector<double> energy(partition.num_bands(), 0.0);
  for (int b = 0; b < partition.num_bands(); ++b) {
    for (std::size_t flat : partition.members(b)) {
      for (int c = 0; c < ch; ++c) energy[b] += std::norm(values[flat * ch + c]);
    }
  }
  return energy;
}

}  // namespace freqlens

#endif  // FREQLENS_SPECTRAL_HPP
