#pragma once
// Versioned binary archive for checkpoints: network parameters keyed by
// network name, optimizer state, RNG stream state, and the identity
// re-index map.  Sections are written and read in a fixed order; every
// section starts with its name so mismatches fail loudly instead of
// misinterpreting bytes.

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "translearn/nn.hpp"
#include "translearn/optim.hpp"
#include "translearn/rng.hpp"

namespace translearn {

inline constexpr char kArchiveMagic[8] = {'T', 'L', 'A', 'R', 'C', 'H', 'V', '0'};
inline constexpr std::uint32_t kFormatVersion = 1;

class ArchiveWriter {
 public:
  explicit ArchiveWriter(const std::string& path);
  ~ArchiveWriter();

  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i64(std::int64_t v);
  void f64(double v);
  void str(const std::string& s);
  void tensor(const Tensor& t);
  // Named section marker.
  void section(const std::string& name);
  void close();

 private:
  void raw(const void* p, std::size_t n);
  std::ofstream out_;
  std::string path_;
};

class ArchiveReader {
 public:
  explicit ArchiveReader(const std::string& path);

  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64();
  double f64();
  std::string str();
  Tensor tensor();
  // Reads a section marker and verifies its name.
  void expect_section(const std::string& name);
  // Reads a section marker and returns its name (for archives whose layout
  // depends on a leading kind tag).
  std::string read_section_name();

 private:
  void raw(void* p, std::size_t n);
  std::ifstream in_;
  std::string path_;
};

// Network parameters and buffers, keyed by the network's name.
void save_network(ArchiveWriter& w, const Network& net);
void load_network(ArchiveReader& r, const Network& net);

void save_adam(ArchiveWriter& w, const std::string& name, const Adam& opt);
void load_adam(ArchiveReader& r, const std::string& name, Adam& opt);
void save_sgd(ArchiveWriter& w, const std::string& name, const SGD& opt);
void load_sgd(ArchiveReader& r, const std::string& name, SGD& opt);

void save_rng(ArchiveWriter& w, const std::string& name, const Rng& rng);
void load_rng(ArchiveReader& r, const std::string& name, Rng& rng);

void save_pid_map(ArchiveWriter& w, const std::map<int, int>& pid_to_class);
std::map<int, int> load_pid_map(ArchiveReader& r);

}  // namespace translearn
