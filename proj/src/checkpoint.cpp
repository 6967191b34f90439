#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hpgkit/error.hpp"
#include "hpgkit/io.hpp"
#include "hpgkit/numeric.hpp"

namespace hpgkit::num {

namespace {

constexpr char kMagic[8] = {'H', 'P', 'G', 'K', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw Error("checkpoint is truncated");
  }
  std::string data_;
  std::size_t pos_ = 0;
};

std::string read_header(Reader& r) {
  if (r.bytes(8) != std::string(kMagic, 8)) throw Error("not an hpgkit checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw Error("unsupported checkpoint version " + std::to_string(version));
  const auto len = r.get<std::uint64_t>();
  return r.bytes(len);
}

}  // namespace

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void save_checkpoint(const std::string& path, const ParamStore& store, const std::string& manifest_json) {
  std::string out(kMagic, 8);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, manifest_json.size());
  out += manifest_json;
  put<std::uint64_t>(out, store.names().size());
  for (std::size_t i = 0; i < store.names().size(); ++i) {
    const auto& name = store.names()[i];
    const auto& t = store.params()[i]->value;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put<std::uint64_t>(out, d);
    for (double v : t.data) put<double>(out, v);
  }
  write_file_atomic(path, out);
}

std::string read_checkpoint_manifest(const std::string& path) {
  Reader r(read_file(path));
  return read_header(r);
}

std::string load_checkpoint(const std::string& path, ParamStore& store) {
  Reader r(read_file(path));
  std::string manifest = read_header(r);
  const auto count = r.get<std::uint64_t>();
  if (count != store.names().size())
    throw Error("checkpoint has " + std::to_string(count) + " tensors, model expects " +
                std::to_string(store.names().size()));
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::string name = r.bytes(r.get<std::uint32_t>());
    const auto ndim = r.get<std::uint32_t>();
    Shape shape;
    for (std::uint32_t d = 0; d < ndim; ++d) shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
    Var p = store.get(name);
    if (p->value.shape != shape)
      throw Error("checkpoint tensor '" + name + "' has shape " + shape_str(shape) + ", model expects " +
                  shape_str(p->value.shape));
    for (auto& v : p->value.data) v = r.get<double>();
  }
  return manifest;
}

}  // namespace hpgkit::num
