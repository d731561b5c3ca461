#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mergelab/rng.hpp"

namespace mergelab::data {

inline constexpr int kImageSize = 32;
inline constexpr int kImageBytes = 3 * kImageSize * kImageSize;  // planar RGB

struct ImageRecord {
  std::array<std::uint8_t, kImageBytes> pixels;
  std::int32_t label = 0;
};

enum class CifarVariant { cifar10, cifar100 };

// Parses one CIFAR binary file. cifar10 records are [label, 3072 pixels];
// cifar100 records are [coarse, fine, 3072 pixels] and keep the fine label.
std::vector<ImageRecord> parse_cifar(const std::filesystem::path& path, CifarVariant variant);

// Loads and concatenates a manifest of files from a dataset directory.
std::vector<ImageRecord> load_cifar_files(const std::filesystem::path& dir,
                                          const std::vector<std::string>& files,
                                          CifarVariant variant);

std::array<std::uint8_t, 3> hsv_to_rgb(double h, double s, double v);

// Class c gets hue c / num_classes at full saturation and value.
std::vector<std::array<std::uint8_t, 3>> make_color_palette(int num_classes);

// One patch_size^2 pattern of {0,255} bytes per class, pairwise distinct
// (regenerated with an incremented seed on collision).
std::vector<std::vector<std::uint8_t>> make_noise_patterns(int num_classes, int patch_size,
                                                           std::uint64_t content_seed);

enum class CueFamily { none, color, noise };
enum class CuePosition { top_left, bottom_right };

// Full description of a visual cue family: what to stamp where, per class,
// and how often.
struct CueSpec {
  CueFamily family = CueFamily::none;
  int patch_size = 5;
  CuePosition position = CuePosition::top_left;
  double apply_prob = 0.0;
  std::vector<std::array<std::uint8_t, 3>> colors;     // color family, one per class
  std::vector<std::vector<std::uint8_t>> patterns;     // noise family, one per class
  std::uint64_t content_seed = 0;                      // noise family provenance

  bool active() const { return family != CueFamily::none && apply_prob > 0.0; }
  int num_classes() const;
  void validate() const;
};

CueSpec make_color_cue(int num_classes, int patch_size, CuePosition position, double apply_prob);
CueSpec make_noise_cue(int num_classes, int patch_size, CuePosition position, double apply_prob,
                       std::uint64_t content_seed);
CueSpec no_cue();

// Stamps the class's patch over the cue region when coin < apply_prob.
// Color cues broadcast the class RGB triple; noise cues replicate the
// grayscale pattern on all three channels.
void apply_cue(std::span<std::uint8_t, kImageBytes> pixels, const CueSpec& cue, std::int32_t label,
               double coin);

// Horizontal flip + zero-pad-4 random crop, decomposed so tests can pin the
// random draws. crop offsets are in [0, 8]; (4, 4) with no flip is identity.
void augment_apply(std::span<std::uint8_t, kImageBytes> pixels, bool flip, int crop_row,
                   int crop_col);
void augment(std::span<std::uint8_t, kImageBytes> pixels, Pcg32& rng);

// Class-stratified random partition into num_chunks chunks.
struct ChunkSplit {
  std::vector<std::int32_t> assignments;  // per record, in {0..num_chunks-1}
  std::uint64_t split_seed = 0;
  int num_chunks = 0;

  std::vector<std::int32_t> chunk_indices(int chunk) const;
};

ChunkSplit chunk_split(const std::vector<ImageRecord>& records, int num_chunks,
                       std::uint64_t split_seed);

// A deterministic sample stream over (a subset of) a record list. Training
// views shuffle per epoch and augment; evaluation views iterate in order and
// only stamp cues. Same rng_seed => bit-identical stream.
class DatasetView {
public:
  struct Sample {
    std::array<std::uint8_t, kImageBytes> pixels;
    std::int32_t label;
  };

  DatasetView(const std::vector<ImageRecord>& records, std::vector<std::int32_t> indices,
              bool augment_enabled, CueSpec cue, std::uint64_t rng_seed);

  // Convenience: view over all records.
  DatasetView(const std::vector<ImageRecord>& records, bool augment_enabled, CueSpec cue,
              std::uint64_t rng_seed);

  std::int64_t size() const { return static_cast<std::int64_t>(indices_.size()); }
  const CueSpec& cue() const { return cue_; }
  std::uint64_t rng_seed() const { return rng_seed_; }

  class EpochStream {
   public:
    bool next(Sample& out);
    std::int64_t remaining() const { return static_cast<std::int64_t>(order_.size()) - cursor_; }

   private:
    friend class DatasetView;
    const DatasetView* view_ = nullptr;
    std::vector<std::int32_t> order_;
    std::int64_t cursor_ = 0;
    Pcg32 rng_{0};
  };

  // Per-sample draws happen in a fixed order (flip, crop row, crop col, cue
  // coin), so the stream for a given (rng_seed, epoch) is reproducible.
  EpochStream epoch(std::int64_t epoch_index) const;

  // Content fingerprint of what this view feeds a trainer (records, subset,
  // cue, seed); used as part of stage cache keys.
  std::uint64_t fingerprint() const;

private:
  const std::vector<ImageRecord>* records_;
  std::vector<std::int32_t> indices_;
  bool augment_enabled_;
  CueSpec cue_;
  std::uint64_t rng_seed_;
};

std::uint64_t records_fingerprint(const std::vector<ImageRecord>& records);
std::uint64_t cue_fingerprint(const CueSpec& cue);

}  // namespace mergelab::data
