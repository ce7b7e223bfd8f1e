#include "transnet/io.hpp"

#include <cstdio>
#include <sstream>

namespace transnet {

std::string fmt_double(double v) {
  char buf[64];
  // %.17g round-trips every finite double
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace transnet
