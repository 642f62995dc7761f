#include "translearn/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace translearn {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

[[noreturn]] void fail_line(const std::string& origin, int line,
                            const std::string& msg) {
  throw std::runtime_error("config: " + origin + ":" + std::to_string(line) +
                           ": " + msg);
}

}  // namespace

Config Config::parse_string(const std::string& text,
                            const std::string& origin) {
  Config cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = raw;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) fail_line(origin, lineno, "expected 'key = value', got '" + trim(raw) + "'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail_line(origin, lineno, "empty key");
    for (char c : key) {
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' ||
            c == '_' || c == '-')) {
        fail_line(origin, lineno, "invalid character in key '" + key + "'");
      }
    }
    if (cfg.values_.count(key)) fail_line(origin, lineno, "duplicate key '" + key + "'");
    cfg.values_[key] = value;
  }
  return cfg;
}

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open file: " + path);
  std::ostringstream body;
  body << in.rdbuf();
  return parse_string(body.str(), path);
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

std::vector<std::string> Config::keys() const {
  std::vector<std::string> out;
  out.reserve(values_.size());
  for (const auto& kv : values_) out.push_back(kv.first);
  return out;
}

const std::string* Config::find(const std::string& key) const {
  auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

void Config::record(const std::string& key, const std::string& effective) const {
  used_.insert(key);
  effective_[key] = effective;
}

std::string Config::get_string(const std::string& key,
                               const std::string& def) const {
  const std::string* v = find(key);
  std::string out = v ? *v : def;
  record(key, out);
  return out;
}

std::string Config::require_string(const std::string& key) const {
  const std::string* v = find(key);
  if (!v) throw std::runtime_error("config: missing required key '" + key + "' in " + origin_);
  record(key, *v);
  return *v;
}

std::int64_t Config::get_int(const std::string& key, std::int64_t def) const {
  const std::string* v = find(key);
  std::int64_t out = def;
  if (v) {
    try {
      std::size_t pos = 0;
      out = std::stoll(*v, &pos);
      if (pos != v->size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw std::runtime_error("config: key '" + key + "' expects an integer, got '" + *v + "'");
    }
  }
  record(key, std::to_string(out));
  return out;
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t def) const {
  const std::string* v = find(key);
  std::uint64_t out = def;
  if (v) {
    try {
      std::size_t pos = 0;
      out = std::stoull(*v, &pos);
      if (pos != v->size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw std::runtime_error("config: key '" + key + "' expects an unsigned integer, got '" + *v + "'");
    }
  }
  record(key, std::to_string(out));
  return out;
}

double Config::get_double(const std::string& key, double def) const {
  const std::string* v = find(key);
  double out = def;
  if (v) {
    try {
      std::size_t pos = 0;
      out = std::stod(*v, &pos);
      if (pos != v->size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw std::runtime_error("config: key '" + key + "' expects a number, got '" + *v + "'");
    }
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", out);
  record(key, buf);
  return out;
}

bool Config::get_bool(const std::string& key, bool def) const {
  const std::string* v = find(key);
  bool out = def;
  if (v) {
    if (*v == "true" || *v == "1" || *v == "yes") out = true;
    else if (*v == "false" || *v == "0" || *v == "no") out = false;
    else throw std::runtime_error("config: key '" + key + "' expects a boolean, got '" + *v + "'");
  }
  record(key, out ? "true" : "false");
  return out;
}

void Config::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

void Config::check_unused() const {
  std::vector<std::string> unknown;
  for (const auto& kv : values_) {
    if (!used_.count(kv.first)) unknown.push_back(kv.first);
  }
  if (!unknown.empty()) {
    std::string msg = "config: unknown key(s) in " + origin_ + ":";
    for (const auto& k : unknown) msg += " '" + k + "'";
    throw std::runtime_error(msg);
  }
}

std::string Config::resolved_text() const {
  std::ostringstream out;
  for (const auto& kv : effective_) out << kv.first << " = " << kv.second << "\n";
  return out.str();
}

}  // namespace translearn
