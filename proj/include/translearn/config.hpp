#pragma once

// Plain-text configuration files: one `key = value` pair per line with
// dotted keys (e.g. `train.batch_size = 16`).  '#' starts a comment.  Keys
// that the consuming command never reads are reported as errors so typos
// fail loudly instead of being silently ignored.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace translearn {

class Config {
 public:
  Config() = default;

  // Parses `key = value` lines.  Throws std::runtime_error with the line
  // number on malformed lines or duplicate keys.
  static Config parse_string(const std::string& text,
                             const std::string& origin = "<string>");
  static Config parse_file(const std::string& path);

  bool has(const std::string& key) const;

  // All keys present (file plus overrides), sorted.
  std::vector<std::string> keys() const;

  // Typed getters.  Each getter records the key (and the effective value,
  // default included) so `resolved_text` can dump the full configuration
  // and `check_unused` can flag keys the command never consumed.
  std::string get_string(const std::string& key, const std::string& def) const;
  std::int64_t get_int(const std::string& key, std::int64_t def) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t def) const;
  double get_double(const std::string& key, double def) const;
  bool get_bool(const std::string& key, bool def) const;

  // Required variants: throw if the key is absent.
  std::string require_string(const std::string& key) const;

  // Command-line overrides (applied after parsing, before getters run).
  void set(const std::string& key, const std::string& value);

  // Throws listing every key present in the file that no getter consumed.
  void check_unused() const;

  // `key = value` dump of every key a getter touched, defaults filled in,
  // sorted by key.  Written into the output directory of each run so the
  // effective settings are always on disk.
  std::string resolved_text() const;

 private:
  std::string origin_;
  std::map<std::string, std::string> values_;
  // Mutated by getters to track consumption / effective values.
  mutable std::set<std::string> used_;
  mutable std::map<std::string, std::string> effective_;

  const std::string* find(const std::string& key) const;
  void record(const std::string& key, const std::string& effective) const;
};

}  // namespace translearn
