#include "kinetic/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "kinetic/error.hpp"

namespace kinetic {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 2);
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  return out;
}

namespace {

std::string value_json(const JsonRow::Value& v) {
  if (std::holds_alternative<double>(v)) return format_double(std::get<double>(v));
  if (std::holds_alternative<long long>(v)) return std::to_string(std::get<long long>(v));
  if (std::holds_alternative<bool>(v)) return std::get<bool>(v) ? "true" : "false";
  return "\"" + json_escape(std::get<std::string>(v)) + "\"";
}

std::string value_plain(const JsonRow::Value& v) {
  if (std::holds_alternative<double>(v)) return format_double(std::get<double>(v));
  if (std::holds_alternative<long long>(v)) return std::to_string(std::get<long long>(v));
  if (std::holds_alternative<bool>(v)) return std::get<bool>(v) ? "true" : "false";
  return std::get<std::string>(v);
}

}  // namespace

std::string to_json_line(const JsonRow& row) {
  std::string out = "{";
  bool first = true;
  for (const auto& [k, v] : row.fields()) {
    if (!first) out += ",";
    first = false;
    out += "\"" + json_escape(k) + "\":" + value_json(v);
  }
  out += "}";
  return out;
}

std::string bundle_json(const ReportBundle& b) {
  std::string out = "{\"provenance\":{\"subcommand\":\"" + json_escape(b.name) +
                    "\",\"config_hash\":\"" + json_escape(b.config_hash) +
                    "\",\"seed\":" + std::to_string(b.seed) + ",\"code_version\":\"" +
                    json_escape(b.code_version) + "\"}}\n";
  for (const auto& row : b.rows) out += to_json_line(row) + "\n";
  return out;
}

std::string bundle_csv(const ReportBundle& b) {
  std::string out;
  if (b.rows.empty()) return out;
  bool first = true;
  for (const auto& [k, v] : b.rows.front().fields()) {
    (void)v;
    if (!first) out += ",";
    first = false;
    out += k;
  }
  out += "\n";
  for (const auto& row : b.rows) {
    first = true;
    for (const auto& [k, v] : row.fields()) {
      (void)k;
      if (!first) out += ",";
      first = false;
      out += value_plain(v);
    }
    out += "\n";
  }
  return out;
}

std::string bundle_text(const ReportBundle& b) {
  std::string out;
  out += "# " + b.name + "  (config " + b.config_hash + ", seed " + std::to_string(b.seed) +
         ", " + b.code_version + ")\n";
  for (const auto& line : b.summary_lines) out += line + "\n";
  if (!b.rows.empty()) {
    out += "\n";
    for (const auto& row : b.rows) {
      std::string line;
      for (const auto& [k, v] : row.fields()) {
        if (!line.empty()) line += "  ";
        line += k + "=" + value_plain(v);
      }
      out += line + "\n";
    }
  }
  if (b.check_failed) out += "\nCHECK FAILED: " + b.failed_invariant + "\n";
  return out;
}

void emit_report(const ReportBundle& b, const std::string& format, const std::string& dir) {
  std::string payload;
  std::string ext;
  if (format == "json") {
    payload = bundle_json(b);
    ext = ".json";
  } else if (format == "csv") {
    payload = bundle_csv(b);
    ext = ".csv";
  } else if (format == "text") {
    payload = bundle_text(b);
    ext = ".txt";
  } else {
    throw Error(ErrorCode::ConfigInvalid, "unknown report format: " + format);
  }
  if (dir == "-") {
    std::cout << payload;
    return;
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const std::string path = dir + "/" + b.name + ext;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path);
  out << payload;
  if (!out.good()) throw Error(ErrorCode::IoError, "write failed: " + path);
}

std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hash_hex(const std::string& data) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)fnv1a64(data));
  return buf;
}

}  // namespace kinetic
