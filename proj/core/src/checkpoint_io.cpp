#include "mergelab/checkpoint_io.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

#include "mergelab/rng.hpp"

namespace mergelab::io {

namespace {

using nlohmann::json;

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
public:
  Reader(const std::string& buf, const std::string& name) : buf_(buf), name_(name) {}

  std::uint16_t u16() { return static_cast<std::uint16_t>(u_bytes(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(u_bytes(4)); }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void raw(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, buf_.data() + pos_, n);
    pos_ += n;
  }

  std::size_t pos() const { return pos_; }
  std::size_t size() const { return buf_.size(); }
  bool at_end() const { return pos_ == buf_.size(); }

private:
  std::uint64_t u_bytes(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  void need(std::size_t n) {
    if (pos_ + n > buf_.size()) {
      raise(ErrorKind::format,
            name_ + ": truncated checkpoint at offset " + std::to_string(pos_));
    }
  }

  const std::string& buf_;
  std::string name_;
  std::size_t pos_ = 0;
};

std::string tensor_section(const nn::ParamSet& params) {
  std::string out;
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& e : params) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.append(e.name);
    put_u32(out, static_cast<std::uint32_t>(e.tensor.shape.size()));
    for (std::int64_t d : e.tensor.shape) put_u32(out, static_cast<std::uint32_t>(d));
    const std::size_t bytes = e.tensor.data.size() * sizeof(float);
    const std::size_t off = out.size();
    out.resize(off + bytes);
    std::memcpy(out.data() + off, e.tensor.data.data(), bytes);
  }
  return out;
}

std::uint64_t section_hash(const std::string& section) {
  Fnv1a64 h;
  h.update(section.data(), section.size());
  return h.digest();
}

json meta_to_json(const train::Checkpoint& ck, std::uint64_t tensor_hash) {
  json j;
  j["arch"] = {{"name", models::arch_name_to_string(ck.meta.arch.arch)},
               {"num_classes", ck.meta.arch.num_classes},
               {"base_width", ck.meta.arch.effective_base_width()}};
  j["seed"] = ck.meta.seed;
  j["task_history"] = ck.meta.task_history;
  j["stage_index"] = ck.meta.stage_index;
  j["epochs_trained"] = ck.meta.epochs_trained;
  j["parent_id"] = ck.meta.parent_id;
  j["created_at"] = ck.meta.created_at;
  j["id"] = ck.id;
  j["tensor_hash"] = to_hex(tensor_hash);
  return j;
}

}  // namespace

void save_checkpoint(const train::Checkpoint& ck, const std::filesystem::path& path) {
  const std::string section = tensor_section(ck.params);
  const json meta = meta_to_json(ck, section_hash(section));
  const std::string meta_text = meta.dump();

  std::string out;
  out.append(kCheckpointMagic, 4);
  put_u16(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(meta_text.size()));
  out.append(meta_text);
  out.append(section);

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) raise(ErrorKind::io, "cannot write checkpoint " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) raise(ErrorKind::io, "short write for checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

train::Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) raise(ErrorKind::io, "cannot open checkpoint " + path.string());
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(buf, path.string());

  const std::string magic = r.bytes(4);
  if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0) {
    raise(ErrorKind::format, path.string() + ": bad magic, not a checkpoint file");
  }
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion) {
    raise(ErrorKind::format,
          path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t meta_len = r.u32();
  const std::string meta_text = r.bytes(meta_len);
  json meta;
  try {
    meta = json::parse(meta_text);
  } catch (const json::exception& e) {
    raise(ErrorKind::format, path.string() + ": bad metadata block: " + e.what());
  }

  const std::size_t section_start = r.pos();
  {
    Fnv1a64 h;
    h.update(buf.data() + section_start, buf.size() - section_start);
    const std::string stored = meta.value("tensor_hash", "");
    if (stored != to_hex(h.digest())) {
      raise(ErrorKind::integrity, path.string() + ": tensor section hash mismatch (stored " +
                                      stored + ", computed " + to_hex(h.digest()) + ")");
    }
  }

  train::Checkpoint ck;
  try {
    ck.meta.arch.arch = models::arch_name_from_string(meta.at("arch").at("name").get<std::string>());
    ck.meta.arch.num_classes = meta.at("arch").at("num_classes").get<std::int64_t>();
    ck.meta.arch.base_width = meta.at("arch").at("base_width").get<std::int64_t>();
    ck.meta.seed = meta.at("seed").get<std::uint64_t>();
    ck.meta.task_history = meta.at("task_history").get<std::vector<std::string>>();
    ck.meta.stage_index = meta.at("stage_index").get<int>();
    ck.meta.epochs_trained = meta.at("epochs_trained").get<std::int64_t>();
    ck.meta.parent_id = meta.at("parent_id").get<std::string>();
    ck.meta.created_at = meta.value("created_at", "");
  } catch (const json::exception& e) {
    raise(ErrorKind::format, path.string() + ": incomplete metadata: " + e.what());
  }

  const std::uint32_t entry_count = r.u32();
  for (std::uint32_t i = 0; i < entry_count; ++i) {
    const std::uint32_t name_len = r.u32();
    std::string name = r.bytes(name_len);
    const std::uint32_t rank = r.u32();
    std::vector<std::int64_t> shape(rank);
    for (std::uint32_t k = 0; k < rank; ++k) shape[k] = static_cast<std::int64_t>(r.u32());
    const std::int64_t numel = nn::shape_numel(shape);
    nn::Tensor t = nn::Tensor::zeros(shape);
    r.raw(t.data.data(), static_cast<std::size_t>(numel) * sizeof(float));
    ck.params.add(std::move(name), std::move(t));
  }
  if (!r.at_end()) {
    raise(ErrorKind::format, path.string() + ": " + std::to_string(r.size() - r.pos()) +
                                 " trailing bytes after tensor section");
  }

  ck.id = train::checkpoint_content_id(ck.params, ck.meta);
  const std::string stored_id = meta.value("id", "");
  if (!stored_id.empty() && stored_id != ck.id) {
    raise(ErrorKind::integrity,
          path.string() + ": content id mismatch (stored " + stored_id + ", computed " + ck.id + ")");
  }
  return ck;
}

CheckpointStore::CheckpointStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) raise(ErrorKind::io, "cannot create checkpoint store " + dir_.string());
}

std::filesystem::path CheckpointStore::path_of(const std::string& id) const {
  return dir_ / (id + ".ckpt");
}

std::filesystem::path CheckpointStore::save(const train::Checkpoint& ck) {
  const std::filesystem::path p = path_of(ck.id);
  if (!std::filesystem::exists(p)) {
    save_checkpoint(ck, p);
  }
  return p;
}

bool CheckpointStore::contains(const std::string& id) const {
  return std::filesystem::exists(path_of(id));
}

train::Checkpoint CheckpointStore::load(const std::string& id) const {
  const std::filesystem::path p = path_of(id);
  if (!std::filesystem::exists(p)) {
    raise(ErrorKind::io, "checkpoint " + id + " not found in store " + dir_.string());
  }
  return load_checkpoint(p);
}

std::optional<std::string> CheckpointStore::find_stage(const std::string& stage_key) const {
  std::ifstream f(index_path());
  if (!f) return std::nullopt;
  std::string key, id;
  while (f >> key >> id) {
    if (key == stage_key && contains(id)) return id;
  }
  return std::nullopt;
}

void CheckpointStore::record_stage(const std::string& stage_key, const std::string& checkpoint_id) {
  std::ofstream f(index_path(), std::ios::app);
  if (!f) raise(ErrorKind::io, "cannot append to stage index in " + dir_.string());
  f << stage_key << " " << checkpoint_id << "\n";
}

}  // namespace mergelab::io
