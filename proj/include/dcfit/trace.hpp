#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dcfit/common.hpp"

namespace dcfit {

using Json = nlohmann::ordered_json;

/// One line of the event trace. Serialized as
/// {"t":..,"kind":..,"node":..,"port":..,<attrs in insertion order>}.
struct TraceRecord {
  SimTime time = 0;
  std::string kind;
  NodeId node;
  std::int32_t port = -1;
  Json attrs = Json::object();

  std::string to_line() const;
};

class Trace {
 public:
  void add(TraceRecord record) { records_.push_back(std::move(record)); }
  const std::vector<TraceRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  std::size_t count(std::string_view kind) const;

  /// FNV-1a 64 over every serialized line including its newline.
  std::uint64_t hash() const;
  void write_jsonl(std::ostream& out) const;

 private:
  std::vector<TraceRecord> records_;
};

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

Json port_json(PortRef ref);

}  // namespace dcfit
