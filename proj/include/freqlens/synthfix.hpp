#ifndef FREQLENS_SYNTHFIX_HPP
#define FREQLENS_SYNTHFIX_HPP

// Deterministic synthetic fixtures whose spectral energy per band follows a
// chosen profile. Used for end-to-end checks without real face data.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "freqlens/dataset.hpp"
#include "freqlens/error.hpp"
#include "freqlens/spectral.hpp"

namespace freqlens {

/// SplitMix64:
///   state += 0x9E3779B97F4A7C15
///   z = state
///   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
///   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
///   return z ^ (z >> 31)
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform in (0, 1): top 53 bits, offset by half an ulp so 0 never occurs.
  double uniform() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (one draw per call, second value dropped).
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t state_;
};

struct SyntheticSpec {
  std::uint64_t seed = 0;
  std::string group_name;
  std::vector<double> band_profile;  // target energy weight per band (s = band_size)
  int num_identities = 4;
  int pairs_per_label = 25;
  int image_size = 112;
  double band_size = 4.0;
  double variation = 0.5;  // within-identity noise amplitude relative to the identity image
};

namespace detail {

inline void validate(const SyntheticSpec& spec, const BandPartition& partition) {
  if (spec.group_name.empty() || spec.group_name.find(',') != std::string::npos ||
      spec.group_name.find('/') != std::string::npos) {
    throw Error(ErrorKind::kInvalidConfig, "group name must be non-empty without ',' or '/'");
  }
  if (static_cast<int>(spec.band_profile.size()) != partition.num_bands()) {
    throw Error(ErrorKind::kInvalidConfig,
                "band profile has " + std::to_string(spec.band_profile.size()) + " entries, grid has " +
                    std::to_string(partition.num_bands()) + " bands");
  }
  bool positive = false;
  for (double w : spec.band_profile) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorKind::kInvalidConfig, "band weights must be finite and >= 0");
    positive = positive || w > 0.0;
  }
  if (!positive) throw Error(ErrorKind::kInvalidConfig, "band profile needs a positive entry");
  if (spec.num_identities < 2) throw Error(ErrorKind::kInvalidConfig, "imposter pairs need at least two identities");
  if (spec.pairs_per_label < 1) throw Error(ErrorKind::kInvalidConfig, "pairs_per_label must be >= 1");
}

}  // namespace detail

/// Real 3-channel image whose band energies are proportional to `profile`:
/// white Gaussian noise is transformed, each band rescaled to its target
/// energy (zero weights zero the band), and transformed back. Scaling whole
/// bands keeps conjugate symmetry, so the result is real.
inline Image profiled_noise(const std::vector<double>& profile, const BandPartition& partition,
                            SplitMix64& rng) {
  Image noise(partition.height(), partition.width(), 3);
  for (double& v : noise.values()) v = rng.normal();
  Spectrum spectrum = forward_dft(noise);
  const auto energy = band_energy(spectrum, partition);
  auto values = spectrum.values();
  const double pixels = static_cast<double>(partition.height()) * partition.width();
  for (int b = 0; b < partition.num_bands(); ++b) {
    const double target = profile[b] * pixels;
    const double gain = energy[b] > 0.0 ? std::sqrt(target / energy[b]) : 0.0;
    for (std::size_t flat : partition.members(b)) {
      for (int c = 0; c < 3; ++c) values[flat * 3 + c] *= gain;
    }
  }
  return inverse_dft(spectrum);
}

/// Pure scaling into [-1, 1]; no offset, so band energy ratios are kept.
inline void scale_to_unit_range(Image& image) {
  double peak = 0.0;
  for (double v : image.values()) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    for (double& v : image.values()) v /= peak;
  }
}

inline Image synthesize_variant(const Image& identity, const std::vector<double>& profile,
                                const BandPartition& partition, double variation, SplitMix64& rng) {
  Image out = profiled_noise(profile, partition, rng);
  auto dst = out.values();
  const auto src = identity.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i] + variation * dst[i];
  scale_to_unit_range(out);
  return out;
}

/// Images and pair records for one group, written under out_dir/<group>/.
/// Paths in the records are relative to out_dir.
inline std::vector<PairRecord> generate_group(const SyntheticSpec& spec,
                                              const std::filesystem::path& out_dir) {
  const BandPartition partition(spec.image_size, spec.image_size, spec.band_size);
  detail::validate(spec, partition);
  SplitMix64 rng(spec.seed);
  std::vector<Image> identities;
  for (int i = 0; i < spec.num_identities; ++i) {
    identities.push_back(profiled_noise(spec.band_profile, partition, rng));
  }
  std::filesystem::create_directories(out_dir / spec.group_name);

  std::vector<PairRecord> records;
  auto emit = [&](const std::string& stem, int id_a, int id_b, PairLabel label) {
    const std::string a = spec.group_name + "/" + stem + "_a.png";
    const std::string b = spec.group_name + "/" + stem + "_b.png";
    save_png(synthesize_variant(identities[id_a], spec.band_profile, partition, spec.variation, rng),
             out_dir / a);
    save_png(synthesize_variant(identities[id_b], spec.band_profile, partition, spec.variation, rng),
             out_dir / b);
    records.push_back({0, a, b, label, spec.group_name});
  };
  char stem[32];
  for (int k = 0; k < spec.pairs_per_label; ++k) {
    std::snprintf(stem, sizeof stem, "gen%04d", k);
    emit(stem, k % spec.num_identities, k % spec.num_identities, PairLabel::kGenuine);
  }
  for (int k = 0; k < spec.pairs_per_label; ++k) {
    std::snprintf(stem, sizeof stem, "imp%04d", k);
    emit(stem, k % spec.num_identities, (k + 1) % spec.num_identities, PairLabel::kImposter);
  }
  return records;
}

/// Generates every group and writes out_dir/pairs.csv covering all of them.
inline PairList generate_fixtures(std::span<const SyntheticSpec> specs,
                                  const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<PairRecord> all;
  for (const auto& spec : specs) {
    auto records = generate_group(spec, out_dir);
    all.insert(all.end(), records.begin(), records.end());
  }
  PairList list = make_pair_list(std::move(all));
  write_pairs(list, out_dir / "pairs.csv");
  return list;
}

inline PairList generate_fixture(const SyntheticSpec& spec, const std::filesystem::path& out_dir) {
  return generate_fixtures(std::span(&spec, 1), out_dir);
}

/// Unit weights on bands [first, last], zero elsewhere.
inline std::vector<double> band_range_profile(int num_bands, int first, int last) {
  if (first < 0 || last >= num_bands || first > last) {
    throw Error(ErrorKind::kInvalidConfig, "band range " + std::to_string(first) + "-" +
                                               std::to_string(last) + " outside [0, " +
                                               std::to_string(num_bands) + ")");
  }
  std::vector<double> profile(num_bands, 0.0);
  for (int b = first; b <= last; ++b) profile[b] = 1.0;
  return profile;
}

}  // namespace freqlens

#endif  // FREQLENS_SYNTHFIX_HPP
