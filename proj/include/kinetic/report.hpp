#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace kinetic {

// One machine-readable result row with a stable field order.
class JsonRow {
 public:
  using Value = std::variant<double, long long, bool, std::string>;

  JsonRow& set(const std::string& key, double v) { return push(key, Value(v)); }
  JsonRow& set(const std::string& key, int v) { return push(key, Value((long long)v)); }
  JsonRow& set(const std::string& key, long long v) { return push(key, Value(v)); }
  JsonRow& set(const std::string& key, std::uint64_t v) {
    return push(key, Value(static_cast<long long>(v)));
  }
  JsonRow& set(const std::string& key, bool v) { return push(key, Value(v)); }
  JsonRow& set(const std::string& key, const char* v) { return push(key, Value(std::string(v))); }
  JsonRow& set(const std::string& key, const std::string& v) { return push(key, Value(v)); }

  const std::vector<std::pair<std::string, Value>>& fields() const { return fields_; }

 private:
  JsonRow& push(const std::string& key, Value v) {
    fields_.emplace_back(key, std::move(v));
    return *this;
  }
  std::vector<std::pair<std::string, Value>> fields_;
};

struct ReportBundle {
  std::string name;  // subcommand
  std::vector<JsonRow> rows;
  std::vector<std::string> summary_lines;
  std::string config_hash;
  std::uint64_t seed{0};
  std::string code_version;
  bool check_failed{false};
  std::string failed_invariant;
};

// Doubles with 17 significant digits; deterministic byte-for-byte output.
std::string format_double(double v);
std::string json_escape(const std::string& s);

std::string to_json_line(const JsonRow& row);
std::string bundle_json(const ReportBundle& b);   // provenance line + one line per row
std::string bundle_csv(const ReportBundle& b);    // header from the first row's fields
std::string bundle_text(const ReportBundle& b);   // human summary table

// Writes <name>.json / .csv / .txt under dir ("-" prints to stdout).
void emit_report(const ReportBundle& b, const std::string& format, const std::string& dir);

std::uint64_t fnv1a64(const std::string& data);
std::string hash_hex(const std::string& data);

}  // namespace kinetic
