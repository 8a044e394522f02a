#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace ggdr {

/// Ordered key/value container behind checkpoint files.
///
/// File layout (little-endian):
///   "GGDRCKPT" | u32 version | u64 record count
///   per record, sorted by key:
///     u32 key length | key bytes | u8 kind
///     kind 0 tensor: u8 dtype | u32 ndim | i64 dims[ndim] | u64 nbytes | raw bytes
///     kind 1 string: u64 length | bytes
///     kind 2 int64:  8 bytes
///     kind 3 double: 8 bytes (IEEE-754 bit pattern)
///   u64 FNV-1a hash of every preceding byte
///
/// Records are written in key order with no timestamps, so equal contents
/// always serialize to identical bytes.
class Archive {
 public:
  using Value = std::variant<torch::Tensor, std::string, std::int64_t, double>;

  void put(const std::string& key, const torch::Tensor& t);
  void put(const std::string& key, std::string s);
  void put_int(const std::string& key, std::int64_t v);
  void put_double(const std::string& key, double v);

  bool contains(const std::string& key) const { return records_.count(key) != 0; }
  torch::Tensor tensor(const std::string& key) const;
  const std::string& string(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  double real(const std::string& key) const;

  std::vector<std::string> keys() const;
  std::vector<std::string> keys_with_prefix(const std::string& prefix) const;

  std::vector<std::uint8_t> serialize() const;
  static Archive deserialize(const std::vector<std::uint8_t>& bytes,
                             const std::string& origin = "<memory>");

  void save(const std::filesystem::path& path) const;
  static Archive load(const std::filesystem::path& path);

 private:
  const Value& at(const std::string& key) const;
  std::map<std::string, Value> records_;
};

}  // namespace ggdr
