#include "mergelab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "mergelab/errors.hpp"

namespace mergelab::data {

namespace {

constexpr int kRecordBytesCifar10 = 1 + kImageBytes;
constexpr int kRecordBytesCifar100 = 2 + kImageBytes;

int num_classes_of(CifarVariant v) { return v == CifarVariant::cifar10 ? 10 : 100; }

}  // namespace

std::vector<ImageRecord> parse_cifar(const std::filesystem::path& path, CifarVariant variant) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::io, "cannot open dataset file " + path.string());
  in.seekg(0, std::ios::end);
  const std::int64_t file_size = static_cast<std::int64_t>(in.tellg());
  in.seekg(0, std::ios::beg);

  const int record_size =
      variant == CifarVariant::cifar10 ? kRecordBytesCifar10 : kRecordBytesCifar100;
  if (file_size % record_size != 0) {
    const std::int64_t complete = file_size / record_size;
    raise(ErrorKind::format, path.string() + ": truncated at offset " +
                                 std::to_string(complete * record_size) + " (file size " +
                                 std::to_string(file_size) + ", record size " +
                                 std::to_string(record_size) + ")");
  }
  const std::int64_t count = file_size / record_size;
  const int max_label = num_classes_of(variant);

  std::vector<ImageRecord> records(static_cast<std::size_t>(count));
  std::vector<char> buf(static_cast<std::size_t>(record_size));
  for (std::int64_t i = 0; i < count; ++i) {
    in.read(buf.data(), record_size);
    if (!in) raise(ErrorKind::io, path.string() + ": read failed at record " + std::to_string(i));
    // cifar100 stores [coarse, fine]; the fine label is kept.
    const std::uint8_t label = static_cast<std::uint8_t>(
        variant == CifarVariant::cifar10 ? buf[0] : buf[1]);
    if (label >= max_label) {
      raise(ErrorKind::format, path.string() + ": label " + std::to_string(label) +
                                   " out of range at record " + std::to_string(i));
    }
    records[i].label = label;
    std::memcpy(records[i].pixels.data(), buf.data() + (record_size - kImageBytes), kImageBytes);
  }
  return records;
}

std::vector<ImageRecord> load_cifar_files(const std::filesystem::path& dir,
                                          const std::vector<std::string>& files,
                                          CifarVariant variant) {
  std::vector<ImageRecord> all;
  for (const std::string& f : files) {
    std::vector<ImageRecord> part = parse_cifar(dir / f, variant);
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

std::array<std::uint8_t, 3> hsv_to_rgb(double h, double s, double v) {
  const double hp = h * 6.0;
  const int sector = static_cast<int>(hp) % 6;
  const double f = hp - std::floor(hp);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  double r = 0, g = 0, b = 0;
  switch (sector) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    case 5: r = v; g = p; b = q; break;
  }
  auto to_byte = [](double x) {
    return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(x, 0.0, 1.0)));
  };
  return {to_byte(r), to_byte(g), to_byte(b)};
}

std::vector<std::array<std::uint8_t, 3>> make_color_palette(int num_classes) {
  std::vector<std::array<std::uint8_t, 3>> palette(num_classes);
  for (int c = 0; c < num_classes; ++c) {
    palette[c] = hsv_to_rgb(static_cast<double>(c) / static_cast<double>(num_classes), 1.0, 1.0);
  }
  return palette;
}

std::vector<std::vector<std::uint8_t>> make_noise_patterns(int num_classes, int patch_size,
                                                           std::uint64_t content_seed) {
  if (patch_size < 1) raise(ErrorKind::input, "noise patterns: patch_size must be >= 1");
  const int n = patch_size * patch_size;
  for (std::uint64_t seed = content_seed;; ++seed) {
    Pcg32 rng(mix_seed(seed, 0x4e015eULL), 0x9a77);
    std::vector<std::vector<std::uint8_t>> patterns(num_classes);
    for (auto& p : patterns) {
      p.resize(n);
      for (int i = 0; i < n; ++i) p[i] = (rng.next_u32() & 1u) ? 255 : 0;
    }
    bool distinct = true;
    for (int a = 0; a < num_classes && distinct; ++a) {
      for (int b = a + 1; b < num_classes; ++b) {
        if (patterns[a] == patterns[b]) {
          distinct = false;
          break;
        }
      }
    }
    if (distinct) return patterns;
  }
}

int CueSpec::num_classes() const {
  switch (family) {
    case CueFamily::color: return static_cast<int>(colors.size());
    case CueFamily::noise: return static_cast<int>(patterns.size());
    case CueFamily::none: return 0;
  }
  return 0;
}

void CueSpec::validate() const {
  if (family == CueFamily::none) return;
  if (patch_size < 1 || patch_size > kImageSize) {
    raise(ErrorKind::config, "cue: patch_size must be in [1, 32]");
  }
  if (apply_prob < 0.0 || apply_prob > 1.0) raise(ErrorKind::config, "cue: apply_prob outside [0,1]");
  if (family == CueFamily::color && colors.empty()) raise(ErrorKind::config, "color cue has no palette");
  if (family == CueFamily::noise) {
    if (patterns.empty()) raise(ErrorKind::config, "noise cue has no patterns");
    for (const auto& p : patterns) {
      if (static_cast<int>(p.size()) != patch_size * patch_size) {
        raise(ErrorKind::config, "noise pattern size does not match patch_size");
      }
    }
  }
}

CueSpec make_color_cue(int num_classes, int patch_size, CuePosition position, double apply_prob) {
  CueSpec cue;
  cue.family = CueFamily::color;
  cue.patch_size = patch_size;
  cue.position = position;
  cue.apply_prob = apply_prob;
  cue.colors = make_color_palette(num_classes);
  cue.validate();
  return cue;
}

CueSpec make_noise_cue(int num_classes, int patch_size, CuePosition position, double apply_prob,
                       std::uint64_t content_seed) {
  CueSpec cue;
  cue.family = CueFamily::noise;
  cue.patch_size = patch_size;
  cue.position = position;
  cue.apply_prob = apply_prob;
  cue.content_seed = content_seed;
  cue.patterns = make_noise_patterns(num_classes, patch_size, content_seed);
  cue.validate();
  return cue;
}

CueSpec no_cue() { return CueSpec{}; }

void apply_cue(std::span<std::uint8_t, kImageBytes> pixels, const CueSpec& cue, std::int32_t label,
               double coin) {
  if (cue.family == CueFamily::none) return;
  if (!(coin < cue.apply_prob)) return;
  if (label < 0 || label >= cue.num_classes()) {
    raise(ErrorKind::input, "apply_cue: label " + std::to_string(label) + " has no cue content");
  }
  const int n = cue.patch_size;
  const int row0 = cue.position == CuePosition::top_left ? 0 : kImageSize - n;
  const int col0 = cue.position == CuePosition::top_left ? 0 : kImageSize - n;
  for (int ch = 0; ch < 3; ++ch) {
    std::uint8_t* plane = pixels.data() + ch * kImageSize * kImageSize;
    for (int r = 0; r < n; ++r) {
      std::uint8_t* row = plane + (row0 + r) * kImageSize + col0;
      if (cue.family == CueFamily::color) {
        const std::uint8_t v = cue.colors[label][ch];
        for (int c = 0; c < n; ++c) row[c] = v;
      } else {
        const std::uint8_t* pat = cue.patterns[label].data() + r * n;
        for (int c = 0; c < n; ++c) row[c] = pat[c];
      }
    }
  }
}

void augment_apply(std::span<std::uint8_t, kImageBytes> pixels, bool flip, int crop_row,
                   int crop_col) {
  if (crop_row < 0 || crop_row > 8 || crop_col < 0 || crop_col > 8) {
    raise(ErrorKind::input, "augment: crop offset outside [0, 8]");
  }
  std::array<std::uint8_t, kImageBytes> src = {};
  std::memcpy(src.data(), pixels.data(), kImageBytes);
  if (flip) {
    for (int ch = 0; ch < 3; ++ch) {
      std::uint8_t* plane = src.data() + ch * kImageSize * kImageSize;
      for (int r = 0; r < kImageSize; ++r) {
        std::uint8_t* row = plane + r * kImageSize;
        std::reverse(row, row + kImageSize);
      }
    }
  }
  // Crop a 32x32 window at (crop_row, crop_col) out of the zero-padded 40x40
  // image; source pixel (r,c) sits at padded position (r+4, c+4).
  for (int ch = 0; ch < 3; ++ch) {
    const std::uint8_t* splane = src.data() + ch * kImageSize * kImageSize;
    std::uint8_t* dplane = pixels.data() + ch * kImageSize * kImageSize;
    for (int r = 0; r < kImageSize; ++r) {
      const int sr = r + crop_row - 4;
      std::uint8_t* drow = dplane + r * kImageSize;
      if (sr < 0 || sr >= kImageSize) {
        std::memset(drow, 0, kImageSize);
        continue;
      }
      for (int c = 0; c < kImageSize; ++c) {
        const int sc = c + crop_col - 4;
        drow[c] = (sc < 0 || sc >= kImageSize) ? 0 : splane[sr * kImageSize + sc];
      }
    }
  }
}

void augment(std::span<std::uint8_t, kImageBytes> pixels, Pcg32& rng) {
  const bool flip = rng.uniform_double() < 0.5;
  const int crop_row = static_cast<int>(rng.uniform_int(9));
  const int crop_col = static_cast<int>(rng.uniform_int(9));
  augment_apply(pixels, flip, crop_row, crop_col);
}

std::vector<std::int32_t> ChunkSplit::chunk_indices(int chunk) const {
  std::vector<std::int32_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] == chunk) out.push_back(static_cast<std::int32_t>(i));
  }
  return out;
}

ChunkSplit chunk_split(const std::vector<ImageRecord>& records, int num_chunks,
                       std::uint64_t split_seed) {
  if (num_chunks < 1) raise(ErrorKind::input, "chunk_split: num_chunks must be >= 1");
  std::int32_t max_label = -1;
  for (const auto& r : records) max_label = std::max(max_label, r.label);
  std::vector<std::vector<std::int32_t>> by_class(static_cast<std::size_t>(max_label + 1));
  for (std::size_t i = 0; i < records.size(); ++i) {
    by_class[records[i].label].push_back(static_cast<std::int32_t>(i));
  }
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (static_cast<int>(by_class[c].size()) < num_chunks) {
      raise(ErrorKind::input, "chunk_split: class " + std::to_string(c) + " has " +
                                  std::to_string(by_class[c].size()) + " records, need >= " +
                                  std::to_string(num_chunks));
    }
  }
  ChunkSplit split;
  split.split_seed = split_seed;
  split.num_chunks = num_chunks;
  split.assignments.assign(records.size(), 0);
  // Shuffle each class independently, then deal round-robin, so every chunk
  // holds every class and per-class counts differ by at most one.
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    Pcg32 rng(mix_seed(split_seed, static_cast<std::uint64_t>(c)), 0xc4a2);
    rng.shuffle(by_class[c]);
    for (std::size_t j = 0; j < by_class[c].size(); ++j) {
      split.assignments[by_class[c][j]] = static_cast<std::int32_t>(j % num_chunks);
    }
  }
  return split;
}

DatasetView::DatasetView(const std::vector<ImageRecord>& records, std::vector<std::int32_t> indices,
                         bool augment_enabled, CueSpec cue, std::uint64_t rng_seed)
    : records_(&records),
      indices_(std::move(indices)),
      augment_enabled_(augment_enabled),
      cue_(std::move(cue)),
      rng_seed_(rng_seed) {
  cue_.validate();
  for (std::int32_t i : indices_) {
    if (i < 0 || static_cast<std::size_t>(i) >= records.size()) {
      raise(ErrorKind::input, "dataset view: record index " + std::to_string(i) + " out of range");
    }
  }
}

DatasetView::DatasetView(const std::vector<ImageRecord>& records, bool augment_enabled, CueSpec cue,
                         std::uint64_t rng_seed)
    : DatasetView(records, [&] {
        std::vector<std::int32_t> all(records.size());
        std::iota(all.begin(), all.end(), 0);
        return all;
      }(), augment_enabled, std::move(cue), rng_seed) {}

DatasetView::EpochStream DatasetView::epoch(std::int64_t epoch_index) const {
  EpochStream s;
  s.view_ = this;
  s.order_ = indices_;
  s.rng_ = Pcg32(mix_seed(rng_seed_, static_cast<std::uint64_t>(epoch_index)), 0xeb0c);
  if (augment_enabled_) {
    s.rng_.shuffle(s.order_);
  }
  return s;
}

bool DatasetView::EpochStream::next(Sample& out) {
  if (cursor_ >= static_cast<std::int64_t>(order_.size())) return false;
  const ImageRecord& rec = (*view_->records_)[order_[cursor_++]];
  out.pixels = rec.pixels;
  out.label = rec.label;
  if (view_->augment_enabled_) {
    augment(std::span<std::uint8_t, kImageBytes>(out.pixels), rng_);
  }
  if (view_->cue_.family != CueFamily::none) {
    const double coin = rng_.uniform_double();
    apply_cue(std::span<std::uint8_t, kImageBytes>(out.pixels), view_->cue_, out.label, coin);
  }
  return true;
}

std::uint64_t records_fingerprint(const std::vector<ImageRecord>& records) {
  Fnv1a64 h;
  for (const auto& r : records) {
    h.update_value(r.label);
    h.update(r.pixels.data(), r.pixels.size());
  }
  return h.digest();
}

std::uint64_t cue_fingerprint(const CueSpec& cue) {
  Fnv1a64 h;
  h.update_value(static_cast<int>(cue.family));
  h.update_value(cue.patch_size);
  h.update_value(static_cast<int>(cue.position));
  h.update_value(cue.apply_prob);
  for (const auto& c : cue.colors) h.update(c.data(), c.size());
  for (const auto& p : cue.patterns) h.update(p.data(), p.size());
  return h.digest();
}

std::uint64_t DatasetView::fingerprint() const {
  Fnv1a64 h;
  h.update_value(records_fingerprint(*records_));
  for (std::int32_t i : indices_) h.update_value(i);
  h.update_value(augment_enabled_);
  h.update_value(cue_fingerprint(cue_));
  h.update_value(rng_seed_);
  return h.digest();
}

}  // namespace mergelab::data
