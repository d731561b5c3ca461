#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "mergelab/trainer.hpp"

namespace mergelab::io {

// Checkpoint container, little-endian throughout:
//   "MLAB" | u16 version | u32 meta_len | meta (UTF-8 JSON)
//   | u32 entry_count | entries
// entry: u32 name_len | name | u32 rank | u32 dims[rank] | f32 data[numel]
// The FNV-1a hash of the tensor section (entry_count onward) is recorded in
// the metadata and verified on load.
inline constexpr char kCheckpointMagic[4] = {'M', 'L', 'A', 'B'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

void save_checkpoint(const train::Checkpoint& ck, const std::filesystem::path& path);
train::Checkpoint load_checkpoint(const std::filesystem::path& path);

// Content-addressed checkpoint directory: files are named <id>.ckpt and a
// side index maps training-stage cache keys to checkpoint ids so repeated
// runs can reuse finished stages.
class CheckpointStore {
public:
  explicit CheckpointStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }

  std::filesystem::path path_of(const std::string& id) const;
  std::filesystem::path save(const train::Checkpoint& ck);
  bool contains(const std::string& id) const;
  train::Checkpoint load(const std::string& id) const;

  std::optional<std::string> find_stage(const std::string& stage_key) const;
  void record_stage(const std::string& stage_key, const std::string& checkpoint_id);

private:
  std::filesystem::path dir_;
  std::filesystem::path index_path() const { return dir_ / "stages.idx"; }
};

}  // namespace mergelab::io
