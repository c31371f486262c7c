#ifndef FREQLENS_IMPORTANCE_HPP
#define FREQLENS_IMPORTANCE_HPP

// Per-pair frequency-band importance: how much the pair's similarity moves
// when one band is removed from both images.

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "freqlens/dataset.hpp"
#include "freqlens/detail/parallel.hpp"
#include "freqlens/embedder.hpp"
#include "freqlens/error.hpp"
#include "freqlens/spectral.hpp"

namespace freqlens {

struct ImportanceVector {
  std::vector<double> raw;         // h_b = |base - masked similarity|
  std::vector<double> normalized;  // unit-sum relative importance

  int num_bands() const { return static_cast<int>(raw.size()); }
};

struct PairExplanation {
  int pair_id = 0;
  std::string group;
  PairLabel label = PairLabel::kGenuine;
  double base_similarity = 0.0;
  ImportanceVector importance;
};

struct RawImportance {
  double base_similarity = 0.0;
  std::vector<double> h;
};

/// Importance relative to the total; the uniform vector when nothing moved.
/// Dividing by min(h) first and then by the sum of the quotients gives the
/// same result for any positive min, so that step is folded away.
inline std::vector<double> normalize(std::span<const double> h) {
  if (h.empty()) throw Error(ErrorKind::kInvalidInput, "cannot normalize an empty vector");
  double total = 0.0;
  for (double v : h) {
    if (!std::isfinite(v) || v < 0.0) {
      throw Error(ErrorKind::kInvalidInput, "importance entries must be finite and non-negative");
    }
    total += v;
  }
  std::vector<double> out(h.size());
  if (total == 0.0) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(h.size()));
    return out;
  }
  for (std::size_t i = 0; i < h.size(); ++i) out[i] = h[i] / total;
  return out;
}

inline RawImportance raw_importance(const Image& probe, const Image& reference,
                                    const BandPartition& partition, EmbeddingBackend& backend) {
  const int bands = partition.num_bands();
  // [probe, reference, probe masked 0..B-1, reference masked 0..B-1]
  std::vector<Image> batch;
  batch.reserve(2 + 2 * static_cast<std::size_t>(bands));
  batch.push_back(probe);
  batch.push_back(reference);
  for (auto& m : mask_every_band(probe, partition)) batch.push_back(std::move(m));
  for (auto& m : mask_every_band(reference, partition)) batch.push_back(std::move(m));

  std::vector<Embedding> embeddings;
  try {
    embeddings = backend.embed_batch(batch);
  } catch (const Error& e) {
    // Name the band when the failing batch index belongs to a masked image.
    const std::string& d = e.detail();
    if (d.rfind("image ", 0) == 0) {
      const std::size_t index = std::stoul(d.substr(6));
      if (index >= 2) {
        const std::size_t band = (index - 2) % static_cast<std::size_t>(bands);
        const char* side = index - 2 < static_cast<std::size_t>(bands) ? "probe" : "reference";
        rethrow_with_context(e, std::string(side) + " masked at band " + std::to_string(band));
      }
      rethrow_with_context(e, index == 0 ? "unmasked probe" : "unmasked reference");
    }
    throw;
  }

  RawImportance out;
  out.base_similarity = similarity(embeddings[0], embeddings[1]);
  out.h.resize(bands);
  for (int b = 0; b < bands; ++b) {
    const double masked = similarity(embeddings[2 + b], embeddings[2 + bands + b]);
    out.h[b] = std::abs(out.base_similarity - masked);
  }
  return out;
}

inline std::filesystem::path resolve_image_path(const std::filesystem::path& images_root,
                                                const std::string& path) {
  const std::filesystem::path p(path);
  return p.is_absolute() || images_root.empty() ? p : images_root / p;
}

inline PairExplanation explain_pair(const PairRecord& record, const BandPartition& partition,
                                    EmbeddingBackend& backend,
                                    const std::filesystem::path& images_root = {}) {
  try {
    const Image probe = load_image(resolve_image_path(images_root, record.probe_path), partition.extent());
    const Image reference =
        load_image(resolve_image_path(images_root, record.reference_path), partition.extent());
    RawImportance raw = raw_importance(probe, reference, partition, backend);
    PairExplanation out;
    out.pair_id = record.pair_id;
    out.group = record.group;
    out.label = record.label;
    out.base_similarity = raw.base_similarity;
    out.importance.normalized = normalize(raw.h);
    out.importance.raw = std::move(raw.h);
    return out;
  } catch (const Error& e) {
    rethrow_with_context(e, "pair " + std::to_string(record.pair_id));
  }
}

/// Explains every pair on `workers` threads; results come back in pair_id
/// order. `progress` is called with the number of finished pairs.
inline std::vector<PairExplanation> explain_pairs(
    const PairList& pairs, const BandPartition& partition, EmbeddingBackend& backend,
    const std::filesystem::path& images_root, int workers,
    const std::function<void(std::size_t)>& progress = {}) {
  std::vector<PairExplanation> out(pairs.records.size());
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;
  detail::parallel_for(pairs.records.size(), workers, [&](std::size_t i) {
    out[i] = explain_pair(pairs.records[i], partition, backend, images_root);
    const std::size_t finished = ++done;
    if (progress) {
      std::lock_guard lock(progress_mutex);
      progress(finished);
    }
  });
  std::sort(out.begin(), out.end(),
            [](const PairExplanation& a, const PairExplanation& b) { return a.pair_id < b.pair_id; });
  return out;
}

}  // namespace freqlens

#endif  // FREQLENS_IMPORTANCE_HPP
