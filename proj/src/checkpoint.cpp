#include "svae/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "svae/errors.hpp"

namespace svae {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {

const std::string kEndHeader = "end_header";

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t pos) : bytes_(bytes), pos_(pos) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void get_doubles(std::span<double> out, const char* what) {
    need(out.size() * sizeof(double), what);
    std::memcpy(out.data(), bytes_.data() + pos_, out.size() * sizeof(double));
    pos_ += out.size() * sizeof(double);
  }

  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what, pos_);
    }
  }

  const std::string& bytes_;
  std::size_t pos_;
};

std::uint32_t crc_of(const std::string& bytes, std::size_t begin, std::size_t end) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data() + begin), static_cast<uInt>(end - begin)));
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return &a.value;
  }
  return nullptr;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::string out = std::string(kCheckpointMagic) + "\n";
  for (const auto& [k, v] : ckpt.header) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw ContractError("checkpoint header entry '" + k + "' contains '=' or a newline");
    }
    out += k + "=" + v + "\n";
  }
  out += kEndHeader + "\n";
  const std::size_t body = out.size();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.arrays.size()));
  for (const auto& a : ckpt.arrays) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
    out += a.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.value.rank()));
    for (auto d : a.value.shape()) put<std::uint64_t>(out, d);
    const auto data = a.value.data();
    out.append(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(double));
  }
  put<std::uint32_t>(out, crc_of(out, body, out.size()));

  // Write to a sibling temp file first so a crash never leaves a torn checkpoint.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write checkpoint " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  const std::string magic = std::string(kCheckpointMagic) + "\n";
  if (bytes.compare(0, magic.size(), magic) != 0) {
    throw FormatError("not a checkpoint: missing " + std::string(kCheckpointMagic) + " magic", 0);
  }

  Checkpoint ckpt;
  std::size_t pos = magic.size();
  for (;;) {
    const auto eol = bytes.find('\n', pos);
    if (eol == std::string::npos) throw FormatError("checkpoint header not terminated", pos);
    const std::string line = bytes.substr(pos, eol - pos);
    if (line == kEndHeader) {
      pos = eol + 1;
      break;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed header line '" + line + "'", pos);
    ckpt.header[line.substr(0, eq)] = line.substr(eq + 1);
    pos = eol + 1;
  }

  const std::size_t body = pos;
  if (bytes.size() < body + 4) throw FormatError("checkpoint truncated before arrays", body);
  Reader r(bytes, body);
  const auto count = r.get<std::uint32_t>("array count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>("name length");
    std::string name = r.get_string(name_len, "array name");
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank > 8) throw FormatError("implausible rank " + std::to_string(rank), r.pos());
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>("dimension"));
    const std::size_t numel = shape_numel(shape);
    if (numel > (bytes.size() - r.pos()) / sizeof(double)) {
      throw FormatError("array '" + name + "' runs past end of file", r.pos());
    }
    Tensor t(shape);
    r.get_doubles(t.data(), "array data");
    ckpt.arrays.push_back({std::move(name), std::move(t)});
  }
  const std::size_t crc_pos = r.pos();
  const auto stored = r.get<std::uint32_t>("checksum");
  if (stored != crc_of(bytes, body, crc_pos)) {
    throw FormatError("checkpoint checksum mismatch", crc_pos);
  }
  if (r.pos() != bytes.size()) throw FormatError("trailing bytes after checksum", r.pos());
  return ckpt;
}

Checkpoint model_checkpoint(const Model& model) {
  Checkpoint c;
  for (const auto& [k, v] : model.config().to_kv()) c.header["model." + k] = v;
  for (const auto& p : model.named_parameters()) c.arrays.push_back({p.name, p.value.detach()});
  return c;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : ckpt.header) {
    if (k.rfind("model.", 0) == 0) kv[k.substr(6)] = v;
  }
  ModelConfig config;
  try {
    config = ModelConfig::from_kv(kv);
  } catch (const ContractError& e) {
    throw FormatError(std::string("checkpoint model config: ") + e.what(), 0);
  }
  Model model(config, 0);
  model.load_parameters(ckpt.arrays);
  return model;
}

}  // namespace svae
