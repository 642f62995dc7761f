#include "translearn/checkpoint.hpp"

#include <cstring>
#include <stdexcept>

namespace translearn {

ArchiveWriter::ArchiveWriter(const std::string& path)
    : out_(path, std::ios::binary), path_(path) {
  if (!out_) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  raw(kArchiveMagic, sizeof(kArchiveMagic));
  u32(kFormatVersion);
}

ArchiveWriter::~ArchiveWriter() {
  if (out_.is_open()) out_.flush();
}

void ArchiveWriter::raw(const void* p, std::size_t n) {
  out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!out_) throw std::runtime_error("write failure on checkpoint: " + path_);
}

void ArchiveWriter::u32(std::uint32_t v) { raw(&v, sizeof(v)); }
void ArchiveWriter::u64(std::uint64_t v) { raw(&v, sizeof(v)); }
void ArchiveWriter::i64(std::int64_t v) { raw(&v, sizeof(v)); }
void ArchiveWriter::f64(double v) { raw(&v, sizeof(v)); }

void ArchiveWriter::str(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  raw(s.data(), s.size());
}

void ArchiveWriter::tensor(const Tensor& t) {
  u32(static_cast<std::uint32_t>(t.ndim()));
  for (int i = 0; i < t.ndim(); ++i) i64(t.dim(i));
  raw(t.data(), static_cast<std::size_t>(t.size()) * sizeof(double));
}

void ArchiveWriter::section(const std::string& name) { str("@" + name); }

void ArchiveWriter::close() {
  out_.flush();
  if (!out_) throw std::runtime_error("flush failure on checkpoint: " + path_);
  out_.close();
}

ArchiveReader::ArchiveReader(const std::string& path)
    : in_(path, std::ios::binary), path_(path) {
  if (!in_) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[sizeof(kArchiveMagic)];
  raw(magic, sizeof(magic));
  if (std::memcmp(magic, kArchiveMagic, sizeof(magic)) != 0)
    throw std::runtime_error("not a checkpoint archive: " + path);
  const std::uint32_t ver = u32();
  if (ver != kFormatVersion)
    throw std::runtime_error("unsupported checkpoint format_version " +
                             std::to_string(ver) + " in " + path);
}

void ArchiveReader::raw(void* p, std::size_t n) {
  in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n)
    throw std::runtime_error("truncated checkpoint: " + path_);
}

std::uint32_t ArchiveReader::u32() {
  std::uint32_t v;
  raw(&v, sizeof(v));
  return v;
}
std::uint64_t ArchiveReader::u64() {
  std::uint64_t v;
  raw(&v, sizeof(v));
  return v;
}
std::int64_t ArchiveReader::i64() {
  std::int64_t v;
  raw(&v, sizeof(v));
  return v;
}
double ArchiveReader::f64() {
  double v;
  raw(&v, sizeof(v));
  return v;
}

std::string ArchiveReader::str() {
  const std::uint32_t n = u32();
  std::string s(n, '\0');
  if (n) raw(s.data(), n);
  return s;
}

Tensor ArchiveReader::tensor() {
  const std::uint32_t nd = u32();
  std::vector<int> shape(nd);
  for (std::uint32_t i = 0; i < nd; ++i)
    shape[i] = static_cast<int>(i64());
  Tensor t(shape);
  raw(t.data(), static_cast<std::size_t>(t.size()) * sizeof(double));
  return t;
}

void ArchiveReader::expect_section(const std::string& name) {
  const std::string got = str();
  if (got != "@" + name)
    throw std::runtime_error("checkpoint section mismatch in " + path_ +
                             ": expected '" + name + "', found '" + got + "'");
}

std::string ArchiveReader::read_section_name() {
  const std::string got = str();
  if (got.empty() || got[0] != '@')
    throw std::runtime_error("checkpoint: expected a section marker in " +
                             path_ + ", found '" + got + "'");
  return got.substr(1);
}

void save_network(ArchiveWriter& w, const Network& net) {
  w.section("net:" + net.name());
  const auto params = net.params();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const Param* p : params) w.tensor(p->value);
  const auto buffers = net.buffers();
  w.u32(static_cast<std::uint32_t>(buffers.size()));
  for (const auto& [name, t] : buffers) w.tensor(*t);
}

void load_network(ArchiveReader& r, const Network& net) {
  r.expect_section("net:" + net.name());
  const auto params = net.params();
  const std::uint32_t np = r.u32();
  if (np != params.size())
    throw std::runtime_error("checkpoint for network '" + net.name() +
                             "' has " + std::to_string(np) + " parameters, " +
                             "expected " + std::to_string(params.size()));
  for (Param* p : params) {
    Tensor t = r.tensor();
    if (t.shape() != p->value.shape())
      throw std::runtime_error("checkpoint shape mismatch in network '" +
                               net.name() + "' parameter " + p->name);
    p->value = std::move(t);
  }
  const auto buffers = net.buffers();
  const std::uint32_t nb = r.u32();
  if (nb != buffers.size())
    throw std::runtime_error("checkpoint buffer count mismatch in network '" +
                             net.name() + "'");
  for (const auto& [name, t] : buffers) {
    Tensor loaded = r.tensor();
    if (loaded.shape() != t->shape())
      throw std::runtime_error("checkpoint buffer shape mismatch in network '" +
                               net.name() + "' buffer " + name);
    *t = std::move(loaded);
  }
}

void save_adam(ArchiveWriter& w, const std::string& name, const Adam& opt) {
  w.section("adam:" + name);
  w.i64(opt.state().t);
  w.u32(static_cast<std::uint32_t>(opt.state().m.size()));
  for (const Tensor& t : opt.state().m) w.tensor(t);
  for (const Tensor& t : opt.state().v) w.tensor(t);
}

void load_adam(ArchiveReader& r, const std::string& name, Adam& opt) {
  r.expect_section("adam:" + name);
  opt.state().t = r.i64();
  const std::uint32_t n = r.u32();
  if (n != opt.state().m.size())
    throw std::runtime_error("optimizer state size mismatch for " + name);
  for (Tensor& t : opt.state().m) t = r.tensor();
  for (Tensor& t : opt.state().v) t = r.tensor();
}

void save_sgd(ArchiveWriter& w, const std::string& name, const SGD& opt) {
  w.section("sgd:" + name);
  w.u32(static_cast<std::uint32_t>(opt.state().velocity.size()));
  for (const Tensor& t : opt.state().velocity) w.tensor(t);
}

void load_sgd(ArchiveReader& r, const std::string& name, SGD& opt) {
  r.expect_section("sgd:" + name);
  const std::uint32_t n = r.u32();
  if (n != opt.state().velocity.size())
    throw std::runtime_error("optimizer state size mismatch for " + name);
  for (Tensor& t : opt.state().velocity) t = r.tensor();
}

void save_rng(ArchiveWriter& w, const std::string& name, const Rng& rng) {
  w.section("rng:" + name);
  const Rng::State st = rng.state();
  for (int i = 0; i < 4; ++i) w.u64(st.s[i]);
  w.u32(st.has_spare ? 1 : 0);
  w.f64(st.spare);
}

void load_rng(ArchiveReader& r, const std::string& name, Rng& rng) {
  r.expect_section("rng:" + name);
  Rng::State st;
  for (int i = 0; i < 4; ++i) st.s[i] = r.u64();
  st.has_spare = r.u32() != 0;
  st.spare = r.f64();
  rng.set_state(st);
}

void save_pid_map(ArchiveWriter& w, const std::map<int, int>& pid_to_class) {
  w.section("pid_map");
  w.u32(static_cast<std::uint32_t>(pid_to_class.size()));
  for (const auto& [pid, cls] : pid_to_class) {
    w.i64(pid);
    w.i64(cls);
  }
}

std::map<int, int> load_pid_map(ArchiveReader& r) {
  r.expect_section("pid_map");
  const std::uint32_t n = r.u32();
  std::map<int, int> out;
  for (std::uint32_t i = 0; i < n; ++i) {
    const int pid = static_cast<int>(r.i64());
    const int cls = static_cast<int>(r.i64());
    out[pid] = cls;
  }
  return out;
}

}  // namespace translearn
