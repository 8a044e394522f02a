#include "ggdr/archive.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "ggdr/errors.hpp"

namespace ggdr {

namespace {

constexpr char kMagic[8] = {'G', 'G', 'D', 'R', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct Writer {
  std::vector<std::uint8_t> out;
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  template <typename T>
  void pod(T v) {
    raw(&v, sizeof(T));
  }
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& in, std::string origin)
      : in_(in), origin_(std::move(origin)) {}

  void raw(void* p, std::size_t n, const std::string& field) {
    if (pos_ + n > limit_) {
      throw CheckpointError(origin_ + ": truncated while reading " + field + " (need " +
                            std::to_string(n) + " bytes at offset " +
                            std::to_string(pos_) + ")");
    }
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T pod(const std::string& field) {
    T v{};
    raw(&v, sizeof(T), field);
    return v;
  }
  void set_limit(std::size_t limit) { limit_ = limit; }
  std::size_t pos() const { return pos_; }
  const std::string& origin() const { return origin_; }

 private:
  const std::vector<std::uint8_t>& in_;
  std::string origin_;
  std::size_t pos_ = 0;
  std::size_t limit_ = 0;
};

std::uint8_t dtype_code(at::ScalarType t) {
  switch (t) {
    case at::kFloat: return 0;
    case at::kDouble: return 1;
    case at::kLong: return 2;
    case at::kByte: return 3;
    case at::kInt: return 4;
    default:
      throw CheckpointError(std::string("unsupported tensor dtype ") + c10::toString(t));
  }
}

at::ScalarType dtype_from(std::uint8_t c, const std::string& where) {
  switch (c) {
    case 0: return at::kFloat;
    case 1: return at::kDouble;
    case 2: return at::kLong;
    case 3: return at::kByte;
    case 4: return at::kInt;
    default:
      throw CheckpointError(where + ": unknown dtype code " + std::to_string(c));
  }
}

}  // namespace

void Archive::put(const std::string& key, const torch::Tensor& t) {
  records_[key] = t.detach().cpu().contiguous().clone();
}
void Archive::put(const std::string& key, std::string s) { records_[key] = std::move(s); }
void Archive::put_int(const std::string& key, std::int64_t v) { records_[key] = v; }
void Archive::put_double(const std::string& key, double v) { records_[key] = v; }

const Archive::Value& Archive::at(const std::string& key) const {
  const auto it = records_.find(key);
  if (it == records_.end()) throw CheckpointError("missing record '" + key + "'");
  return it->second;
}

torch::Tensor Archive::tensor(const std::string& key) const {
  const auto* v = std::get_if<torch::Tensor>(&at(key));
  if (v == nullptr) throw CheckpointError("record '" + key + "' is not a tensor");
  return *v;
}

const std::string& Archive::string(const std::string& key) const {
  const auto* v = std::get_if<std::string>(&at(key));
  if (v == nullptr) throw CheckpointError("record '" + key + "' is not a string");
  return *v;
}

std::int64_t Archive::integer(const std::string& key) const {
  const auto* v = std::get_if<std::int64_t>(&at(key));
  if (v == nullptr) throw CheckpointError("record '" + key + "' is not an integer");
  return *v;
}

double Archive::real(const std::string& key) const {
  const auto* v = std::get_if<double>(&at(key));
  if (v == nullptr) throw CheckpointError("record '" + key + "' is not a double");
  return *v;
}

std::vector<std::string> Archive::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : records_) out.push_back(k);
  return out;
}

std::vector<std::string> Archive::keys_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (auto it = records_.lower_bound(prefix);
       it != records_.end() && it->first.compare(0, prefix.size(), prefix) == 0; ++it) {
    out.push_back(it->first);
  }
  return out;
}

std::vector<std::uint8_t> Archive::serialize() const {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.pod(kVersion);
  w.pod(static_cast<std::uint64_t>(records_.size()));
  for (const auto& [key, value] : records_) {
    w.pod(static_cast<std::uint32_t>(key.size()));
    w.raw(key.data(), key.size());
    if (const auto* t = std::get_if<torch::Tensor>(&value)) {
      w.pod(std::uint8_t{0});
      w.pod(dtype_code(t->scalar_type()));
      w.pod(static_cast<std::uint32_t>(t->dim()));
      for (const auto d : t->sizes()) w.pod(static_cast<std::int64_t>(d));
      const auto nbytes = static_cast<std::uint64_t>(t->numel() * t->element_size());
      w.pod(nbytes);
      w.raw(t->data_ptr(), nbytes);
    } else if (const auto* s = std::get_if<std::string>(&value)) {
      w.pod(std::uint8_t{1});
      w.pod(static_cast<std::uint64_t>(s->size()));
      w.raw(s->data(), s->size());
    } else if (const auto* i = std::get_if<std::int64_t>(&value)) {
      w.pod(std::uint8_t{2});
      w.pod(*i);
    } else {
      w.pod(std::uint8_t{3});
      w.pod(std::get<double>(value));
    }
  }
  const auto h = fnv1a(w.out.data(), w.out.size());
  w.pod(h);
  return std::move(w.out);
}

Archive Archive::deserialize(const std::vector<std::uint8_t>& bytes,
                             const std::string& origin) {
  if (bytes.size() < sizeof(kMagic) + 4 + 8 + 8) {
    throw CheckpointError(origin + ": file too short to be a checkpoint (" +
                          std::to_string(bytes.size()) + " bytes)");
  }
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError(origin + ": bad magic, not a checkpoint file");
  }
  const auto body = bytes.size() - 8;
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + body, 8);
  const auto actual = fnv1a(bytes.data(), body);

  Reader r(bytes, origin);
  r.set_limit(body);
  char magic[8];
  r.raw(magic, 8, "magic");
  const auto version = r.pod<std::uint32_t>("version");
  if (version != kVersion) {
    throw CheckpointError(origin + ": unsupported checkpoint version " +
                          std::to_string(version));
  }
  const auto count = r.pod<std::uint64_t>("record count");
  Archive a;
  for (std::uint64_t n = 0; n < count; ++n) {
    const std::string where = "record #" + std::to_string(n);
    const auto klen = r.pod<std::uint32_t>(where + " key length");
    if (klen > body) throw CheckpointError(origin + ": " + where + " has an implausible key length");
    std::string key(klen, '\0');
    r.raw(key.data(), klen, where + " key");
    const std::string field = "record '" + key + "'";
    const auto kind = r.pod<std::uint8_t>(field + " kind");
    switch (kind) {
      case 0: {
        const auto dtype = dtype_from(r.pod<std::uint8_t>(field + " dtype"), origin + ": " + field);
        const auto ndim = r.pod<std::uint32_t>(field + " ndim");
        if (ndim > 16) throw CheckpointError(origin + ": " + field + " has " + std::to_string(ndim) + " dims");
        std::vector<std::int64_t> dims(ndim);
        for (auto& d : dims) {
          d = r.pod<std::int64_t>(field + " shape");
          if (d < 0) throw CheckpointError(origin + ": " + field + " has a negative dimension");
        }
        const auto nbytes = r.pod<std::uint64_t>(field + " byte count");
        std::uint64_t numel = 1;
        for (const auto d : dims) {
          if (d != 0 && numel > body / static_cast<std::uint64_t>(d)) {
            throw CheckpointError(origin + ": " + field + " shape is larger than the file");
          }
          numel *= static_cast<std::uint64_t>(d);
        }
        if (nbytes > body) throw CheckpointError(origin + ": " + field + " byte count is larger than the file");
        auto t = torch::empty(dims, torch::TensorOptions().dtype(dtype));
        if (nbytes != static_cast<std::uint64_t>(t.numel() * t.element_size())) {
          throw CheckpointError(origin + ": " + field + " byte count " + std::to_string(nbytes) +
                                " does not match its shape");
        }
        r.raw(t.data_ptr(), nbytes, field + " data");
        a.records_[key] = t;
        break;
      }
      case 1: {
        const auto len = r.pod<std::uint64_t>(field + " length");
        if (len > body) throw CheckpointError(origin + ": " + field + " has an implausible length");
        std::string s(len, '\0');
        r.raw(s.data(), len, field + " text");
        a.records_[key] = std::move(s);
        break;
      }
      case 2:
        a.records_[key] = r.pod<std::int64_t>(field);
        break;
      case 3:
        a.records_[key] = r.pod<double>(field);
        break;
      default:
        throw CheckpointError(origin + ": " + field + " has unknown kind " + std::to_string(kind));
    }
  }
  if (r.pos() != body) {
    throw CheckpointError(origin + ": " + std::to_string(body - r.pos()) +
                          " trailing bytes after the last record");
  }
  if (stored != actual) {
    throw CheckpointError(origin + ": checksum mismatch, file is corrupt");
  }
  return a;
}

void Archive::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw CheckpointError("cannot open " + tmp + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw CheckpointError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Archive Archive::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return deserialize(bytes, path.string());
}

}  // namespace ggdr
