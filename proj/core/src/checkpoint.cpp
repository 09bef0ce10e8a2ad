#include "repaint/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "repaint/common.hpp"

namespace repaint {

namespace {

void put_bytes(std::string& out, const void* p, size_t n) {
  out.append(reinterpret_cast<const char*>(p), n);
}
template <typename T>
void put(std::string& out, T v) {
  put_bytes(out, &v, sizeof(v));  // little-endian host assumed (x86/arm64)
}

struct Reader {
  const std::string& buf;
  size_t off = 0;
  const std::string& path;

  void need(size_t n, const char* what) const {
    if (off + n > buf.size())
      throw FormatError(strcat_msg("checkpoint ", path, ": unexpected end of file at offset ",
                                   off, " reading ", what, " (file size ", buf.size(), ")"));
  }
  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, buf.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
  }
  std::string get_str(size_t n, const char* what) {
    need(n, what);
    std::string s = buf.substr(off, n);
    off += n;
    return s;
  }
};

}  // namespace

void Checkpoint::add(const std::string& name, const Tensor& t) {
  if (!t.defined()) throw ContractError(strcat_msg("checkpoint: undefined tensor for ", name));
  if (name.size() > 0xffff)
    throw ContractError(strcat_msg("checkpoint: entry name too long: ", name));
  entries_.push_back({name, t.clone()});
}

void Checkpoint::add_scalar(const std::string& name, double v) {
  add(name, Tensor::full({}, v, DType::F64));
}

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e.tensor;
  return nullptr;
}

double Checkpoint::scalar(const std::string& name) const {
  const Tensor* t = find(name);
  if (!t) throw FormatError(strcat_msg("checkpoint: missing entry ", name));
  return t->item();
}

void Checkpoint::save(const std::string& path) const {
  std::string out;
  out.append("RPNT");
  put<uint32_t>(out, kVersion);
  put<uint32_t>(out, static_cast<uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    put<uint16_t>(out, static_cast<uint16_t>(e.name.size()));
    out.append(e.name);
    put<uint8_t>(out, static_cast<uint8_t>(e.tensor.dtype()));
    put<uint8_t>(out, static_cast<uint8_t>(e.tensor.rank()));
    for (int i = 0; i < e.tensor.rank(); ++i)
      put<uint32_t>(out, static_cast<uint32_t>(e.tensor.dim(i)));
    const auto& node = *e.tensor.node();
    put_bytes(out, node.value.data(), node.value.size());
  }

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw InputError(strcat_msg("cannot write checkpoint: ", tmp));
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw InputError(strcat_msg("short write to checkpoint: ", tmp));
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw InputError(strcat_msg("cannot rename ", tmp, " to ", path, ": ", ec.message()));
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError(strcat_msg("cannot open checkpoint: ", path));
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  Reader r{buf, 0, path};
  const std::string magic = r.get_str(4, "magic");
  if (magic != "RPNT")
    throw FormatError(strcat_msg("checkpoint ", path, ": bad magic at offset 0"));
  const auto version = r.get<uint32_t>("version");
  if (version != kVersion)
    throw FormatError(strcat_msg("checkpoint ", path, ": unsupported version ", version,
                                 " at offset 4 (expected ", kVersion, ")"));
  const auto count = r.get<uint32_t>("entry count");

  Checkpoint ck;
  for (uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<uint16_t>("name length");
    const std::string name = r.get_str(name_len, "name");
    const auto dtype_code = r.get<uint8_t>("dtype");
    if (dtype_code > 1)
      throw FormatError(strcat_msg("checkpoint ", path, ": unknown dtype code ",
                                   static_cast<int>(dtype_code), " at offset ", r.off - 1));
    const DType dt = static_cast<DType>(dtype_code);
    const auto rank = r.get<uint8_t>("rank");
    Shape shape;
    for (uint8_t d = 0; d < rank; ++d)
      shape.push_back(static_cast<int64_t>(r.get<uint32_t>("dimension")));
    Tensor t = Tensor::zeros(shape, dt);
    const size_t bytes = static_cast<size_t>(t.numel()) * dtype_size(dt);
    r.need(bytes, "payload");
    std::memcpy(t.node()->value.data(), buf.data() + r.off, bytes);
    r.off += bytes;
    ck.entries_.push_back({name, std::move(t)});
  }
  if (r.off != buf.size())
    throw FormatError(strcat_msg("checkpoint ", path, ": ", buf.size() - r.off,
                                 " trailing bytes at offset ", r.off));
  return ck;
}

}  // namespace repaint
