#include "dcfit/trace.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>

namespace dcfit {

std::string TraceRecord::to_line() const {
  Json j = Json::object();
  j["t"] = time;
  j["kind"] = kind;
  j["node"] = node.value;
  j["port"] = port;
  for (const auto& [key, value] : attrs.items()) j[key] = value;
  return j.dump();
}

std::size_t Trace::count(std::string_view kind) const {
  return static_cast<std::size_t>(
      std::count_if(records_.begin(), records_.end(), [&](const auto& r) { return r.kind == kind; }));
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t Trace::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& r : records_) {
    h = fnv1a64(r.to_line(), h);
    h = fnv1a64("\n", h);
  }
  return h;
}

void Trace::write_jsonl(std::ostream& out) const {
  for (const auto& r : records_) out << r.to_line() << '\n';
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

Json port_json(PortRef ref) { return Json::array({ref.node.value, ref.port.value}); }

}  // namespace dcfit
