#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace dueb {

/// Versioned binary container of named entries. Layout (native byte order):
///   "DUEBCKPT" | u32 version | u32 entry count | entries sorted by name
/// where each entry is
///   u8 kind | u32 name length | name | payload
/// and the payload is u64 count + f64[count] (kind 0), u32 length + bytes
/// (kind 1) or a single u64 (kind 2). Identical contents give identical bytes.
class Checkpoint {
 public:
  static constexpr std::uint32_t kVersion = 1;
  using Value = std::variant<std::vector<double>, std::string, std::uint64_t>;

  void put(const std::string& name, std::vector<double> values) { entries_[name] = std::move(values); }
  void put(const std::string& name, std::string text) { entries_[name] = std::move(text); }
  void put(const std::string& name, std::uint64_t v) { entries_[name] = v; }

  [[nodiscard]] bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  [[nodiscard]] const std::vector<double>& array(const std::string& name) const;
  [[nodiscard]] const std::string& text(const std::string& name) const;
  [[nodiscard]] std::uint64_t u64(const std::string& name) const;
  [[nodiscard]] const std::map<std::string, Value>& entries() const { return entries_; }

  [[nodiscard]] std::vector<std::uint8_t> serialize() const;
  static Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  std::map<std::string, Value> entries_;
};

}  // namespace dueb
