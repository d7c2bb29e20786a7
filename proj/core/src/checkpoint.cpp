#include "dueb/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace dueb {
namespace {

constexpr char kMagic[8] = {'D', 'U', 'E', 'B', 'C', 'K', 'P', 'T'};

template <typename T>
void put_raw(std::vector<std::uint8_t>& out, const T& v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    T v;
    need(sizeof(T));
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::vector<double> doubles(std::size_t n) {
    if (n > (bytes_.size() - pos_) / sizeof(double)) throw std::runtime_error("checkpoint: truncated");
    std::vector<double> v(n);
    std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return v;
  }
  [[nodiscard]] bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw std::runtime_error("checkpoint: truncated");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

template <typename T>
const T& lookup(const std::map<std::string, Checkpoint::Value>& m, const std::string& name) {
  const auto it = m.find(name);
  if (it == m.end()) throw std::runtime_error("checkpoint: missing entry '" + name + "'");
  const T* v = std::get_if<T>(&it->second);
  if (!v) throw std::runtime_error("checkpoint: entry '" + name + "' has the wrong kind");
  return *v;
}

}  // namespace

const std::vector<double>& Checkpoint::array(const std::string& name) const {
  return lookup<std::vector<double>>(entries_, name);
}
const std::string& Checkpoint::text(const std::string& name) const {
  return lookup<std::string>(entries_, name);
}
std::uint64_t Checkpoint::u64(const std::string& name) const {
  return lookup<std::uint64_t>(entries_, name);
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_raw(out, kVersion);
  put_raw(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& [name, value] : entries_) {
    put_raw(out, static_cast<std::uint8_t>(value.index()));
    put_raw(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    if (const auto* a = std::get_if<std::vector<double>>(&value)) {
      put_raw(out, static_cast<std::uint64_t>(a->size()));
      const auto* p = reinterpret_cast<const std::uint8_t*>(a->data());
      out.insert(out.end(), p, p + a->size() * sizeof(double));
    } else if (const auto* s = std::get_if<std::string>(&value)) {
      put_raw(out, static_cast<std::uint32_t>(s->size()));
      out.insert(out.end(), s->begin(), s->end());
    } else {
      put_raw(out, std::get<std::uint64_t>(value));
    }
  }
  return out;
}

Checkpoint Checkpoint::deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  std::vector<std::uint8_t> body(bytes.begin() + sizeof kMagic, bytes.end());
  Reader r(body);
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  Checkpoint ck;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto kind = r.get<std::uint8_t>();
    const std::string name = r.str(r.get<std::uint32_t>());
    switch (kind) {
      case 0: ck.put(name, r.doubles(r.get<std::uint64_t>())); break;
      case 1: ck.put(name, r.str(r.get<std::uint32_t>())); break;
      case 2: ck.put(name, r.get<std::uint64_t>()); break;
      default: throw std::runtime_error("checkpoint: unknown entry kind");
    }
  }
  if (!r.at_end()) throw std::runtime_error("checkpoint: trailing bytes");
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace dueb
