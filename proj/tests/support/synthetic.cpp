#include "support/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "mergelab/errors.hpp"
#include "mergelab/rng.hpp"

namespace mergelab::testsupport {

namespace {

constexpr int kGrid = 5;  // control points per axis for a prototype field
constexpr int kSize = data::kImageSize;

using Proto = std::array<float, 3 * kSize * kSize>;  // values in [-1, 1]

Proto make_prototype(Pcg32& rng) {
  float grid[3][kGrid][kGrid];
  for (auto& chan : grid) {
    for (auto& row : chan) {
      for (float& v : row) v = rng.uniform_float(-1.0f, 1.0f);
    }
  }
  Proto proto;
  for (int ch = 0; ch < 3; ++ch) {
    for (int r = 0; r < kSize; ++r) {
      const float u = static_cast<float>(r) * (kGrid - 1) / (kSize - 1);
      const int u0 = std::min(static_cast<int>(u), kGrid - 2);
      const float fu = u - static_cast<float>(u0);
      for (int c = 0; c < kSize; ++c) {
        const float v = static_cast<float>(c) * (kGrid - 1) / (kSize - 1);
        const int v0 = std::min(static_cast<int>(v), kGrid - 2);
        const float fv = v - static_cast<float>(v0);
        const float a = grid[ch][u0][v0] * (1 - fu) * (1 - fv) + grid[ch][u0 + 1][v0] * fu * (1 - fv) +
                        grid[ch][u0][v0 + 1] * (1 - fu) * fv + grid[ch][u0 + 1][v0 + 1] * fu * fv;
        proto[ch * kSize * kSize + r * kSize + c] = a;
      }
    }
  }
  return proto;
}

data::ImageRecord render(const Proto& p1, const Proto& p2, std::int32_t label,
                         const SyntheticSpec& spec, Pcg32& rng) {
  data::ImageRecord rec;
  rec.label = label;
  const float mix = rng.uniform_float();
  const float amp = rng.uniform_float(0.6f, 1.4f);
  const int dy = static_cast<int>(rng.uniform_int(13)) - 6;
  const int dx = static_cast<int>(rng.uniform_int(13)) - 6;
  const float sig = static_cast<float>(spec.signal) * amp;
  const float noi = static_cast<float>(spec.noise);
  for (int ch = 0; ch < 3; ++ch) {
    for (int r = 0; r < kSize; ++r) {
      const int sr = ((r + dy) % kSize + kSize) % kSize;
      for (int c = 0; c < kSize; ++c) {
        const int sc = ((c + dx) % kSize + kSize) % kSize;
        const int idx = ch * kSize * kSize + sr * kSize + sc;
        const float base = (1.0f - mix) * p1[idx] + mix * p2[idx];
        const float eta = rng.uniform_float(-1.0f, 1.0f);
        const float value = 128.0f + 127.0f * (sig * base + noi * eta);
        rec.pixels[ch * kSize * kSize + r * kSize + c] =
            static_cast<std::uint8_t>(std::clamp(std::lround(value), 0l, 255l));
      }
    }
  }
  return rec;
}

}  // namespace

SyntheticData make_synthetic(const SyntheticSpec& spec) {
  std::vector<Proto> protos1, protos2;
  for (int c = 0; c < spec.num_classes; ++c) {
    Pcg32 rng(mix_seed(spec.seed, static_cast<std::uint64_t>(c)), 0x5e7a);
    protos1.push_back(make_prototype(rng));
    protos2.push_back(make_prototype(rng));
  }

  SyntheticData out;
  Pcg32 rng(mix_seed(spec.seed, 0xda7aULL), 0x11);
  for (int c = 0; c < spec.num_classes; ++c) {
    for (int i = 0; i < spec.train_per_class; ++i) {
      out.train.push_back(render(protos1[c], protos2[c], c, spec, rng));
    }
    for (int i = 0; i < spec.test_per_class; ++i) {
      out.test.push_back(render(protos1[c], protos2[c], c, spec, rng));
    }
  }
  rng.shuffle(out.train);
  rng.shuffle(out.test);
  return out;
}

void write_cifar10_file(const std::vector<data::ImageRecord>& records,
                        const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) raise(ErrorKind::io, "cannot write " + path.string());
  for (const auto& rec : records) {
    if (rec.label < 0 || rec.label > 255) raise(ErrorKind::input, "label does not fit in a byte");
    const char label = static_cast<char>(rec.label);
    f.write(&label, 1);
    f.write(reinterpret_cast<const char*>(rec.pixels.data()), rec.pixels.size());
  }
}

}  // namespace mergelab::testsupport
