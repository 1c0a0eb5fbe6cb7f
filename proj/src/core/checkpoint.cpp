#include "textres/core/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "textres/core/error.hpp"

namespace textres {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

constexpr std::array<char, 4> kMagic = {'T', 'X', 'R', 'S'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  bool at_end() const { return pos_ == bytes_.size(); }

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void get_floats(std::vector<float>& out, std::uint64_t count) {
    require(count <= (bytes_.size() - pos_) / sizeof(float), ErrorKind::CorruptCheckpoint,
            "blob length exceeds file size");
    out.resize(count);
    std::memcpy(out.data(), bytes_.data() + pos_, count * sizeof(float));
    pos_ += count * sizeof(float);
  }

 private:
  void need(std::size_t n) const {
    require(bytes_.size() - pos_ >= n, ErrorKind::CorruptCheckpoint, "unexpected end of checkpoint");
  }

  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const std::vector<float>* Checkpoint::find(const std::string& name) const {
  for (const auto& [blob_name, values] : blobs)
    if (blob_name == name) return &values;
  return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::string bytes(kMagic.begin(), kMagic.end());
  put<std::uint32_t>(bytes, ckpt.format_version);
  put_string(bytes, ckpt.module_id);
  put_string(bytes, ckpt.config_digest);
  for (const auto& [name, values] : ckpt.blobs) {
    put_string(bytes, name);
    put<std::uint64_t>(bytes, values.size());
    bytes.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(float));
  }

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      fail(ErrorKind::Io, "write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    fail(ErrorKind::Io, "cannot move checkpoint into place at " + path.string());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open checkpoint " + path.string());
  Reader r(std::string(std::istreambuf_iterator<char>(in), {}));

  std::array<char, 4> magic{};
  for (char& c : magic) c = r.get<char>();
  require(magic == kMagic, ErrorKind::CorruptCheckpoint, "bad magic in " + path.string());

  Checkpoint ckpt;
  ckpt.format_version = r.get<std::uint32_t>();
  require(ckpt.format_version == kCheckpointFormatVersion, ErrorKind::VersionMismatch,
          "checkpoint format version " + std::to_string(ckpt.format_version) + ", expected " +
              std::to_string(kCheckpointFormatVersion));
  ckpt.module_id = r.get_string();
  ckpt.config_digest = r.get_string();
  while (!r.at_end()) {
    std::string name = r.get_string();
    const auto count = r.get<std::uint64_t>();
    std::vector<float> values;
    r.get_floats(values, count);
    ckpt.blobs.emplace_back(std::move(name), std::move(values));
  }
  return ckpt;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_module,
                                 const std::string& expected_digest) {
  LoadedCheckpoint loaded{load_checkpoint(path), std::nullopt};
  require(loaded.checkpoint.module_id == expected_module, ErrorKind::ModuleMismatch,
          "checkpoint holds '" + loaded.checkpoint.module_id + "', expected '" + expected_module + "'");
  if (!expected_digest.empty() && loaded.checkpoint.config_digest != expected_digest) {
    loaded.warning = "config digest " + loaded.checkpoint.config_digest + " differs from current " +
                     expected_digest;
  }
  return loaded;
}

}  // namespace textres
