#pragma once

// CSV metrics, staged output directories and run manifests.
//
// Floats are written in shortest round-trip decimal form; NaN is written
// as `nan`, infinities as `inf` / `-inf`.

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <variant>
#include <vector>

#include <unistd.h>

#include "json.hpp"
#include "wav/core/error.hpp"

namespace wav {

using Cell = std::variant<long long, double, std::string>;
using CsvRow = std::vector<Cell>;

enum class ColumnType { kInt, kReal, kText };

struct Column {
  std::string name;
  ColumnType type = ColumnType::kReal;
};

using CsvSchema = std::vector<Column>;

inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string format_cell(const Cell& c) {
  if (const auto* i = std::get_if<long long>(&c)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&c)) return format_real(*d);
  const auto& s = std::get<std::string>(c);
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + "\"";
}

inline void check_row(const CsvRow& row, const CsvSchema& schema, std::size_t index) {
  if (row.size() != schema.size()) {
    throw ContractError("write_metrics: row " + std::to_string(index) + " has " + std::to_string(row.size()) +
                        " cells, schema has " + std::to_string(schema.size()));
  }
  for (std::size_t j = 0; j < row.size(); ++j) {
    const bool ok = (schema[j].type == ColumnType::kInt && std::holds_alternative<long long>(row[j])) ||
                    (schema[j].type == ColumnType::kReal && std::holds_alternative<double>(row[j])) ||
                    (schema[j].type == ColumnType::kText && std::holds_alternative<std::string>(row[j]));
    if (!ok) {
      throw ContractError("write_metrics: row " + std::to_string(index) + " column '" + schema[j].name +
                          "' has the wrong type");
    }
  }
}

/// Writes the header and all rows in one pass, replacing any existing file.
inline void write_metrics(const std::vector<CsvRow>& rows, const CsvSchema& schema,
                          const std::filesystem::path& path) {
  require(!schema.empty(), "write_metrics: empty schema");
  for (std::size_t i = 0; i < rows.size(); ++i) check_row(rows[i], schema, i);
  std::string text;
  for (std::size_t j = 0; j < schema.size(); ++j) text += (j ? "," : "") + schema[j].name;
  text += '\n';
  for (const auto& row : rows) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) text += ',';
      text += format_cell(row[j]);
    }
    text += '\n';
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  out.close();
  if (!out) throw std::runtime_error("write_metrics: could not write " + path.string());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  out.close();
  if (!out) throw std::runtime_error("could not write " + path.string());
}

/// Outputs go to a sibling temp directory; commit() moves it into place.
/// A previous run directory (one holding manifest.json) is replaced; any
/// other non-empty directory is left alone and commit() fails.
class StagedOutput {
 public:
  explicit StagedOutput(std::filesystem::path final_dir) : final_(std::move(final_dir)) {
    namespace fs = std::filesystem;
    if (final_.has_parent_path()) fs::create_directories(final_.parent_path());
    temp_ = final_;
    temp_ += ".tmp-" + std::to_string(::getpid());
    fs::remove_all(temp_);
    fs::create_directories(temp_);
  }
  StagedOutput(const StagedOutput&) = delete;
  StagedOutput& operator=(const StagedOutput&) = delete;
  ~StagedOutput() {
    if (!committed_) {
      std::error_code ec;
      std::filesystem::remove_all(temp_, ec);
    }
  }

  [[nodiscard]] std::filesystem::path path(const std::string& name) const { return temp_ / name; }
  [[nodiscard]] const std::filesystem::path& final_dir() const noexcept { return final_; }

  void commit() {
    namespace fs = std::filesystem;
    if (fs::exists(final_)) {
      const bool previous_run = fs::exists(final_ / "manifest.json");
      const bool empty = fs::is_directory(final_) && fs::is_empty(final_);
      if (!previous_run && !empty) {
        throw std::runtime_error("output directory " + final_.string() +
                                 " exists and is not a previous run; refusing to replace it");
      }
      fs::remove_all(final_);
    }
    fs::rename(temp_, final_);
    committed_ = true;
  }

 private:
  std::filesystem::path final_;
  std::filesystem::path temp_;
  bool committed_ = false;
};

inline std::string utc_timestamp(std::chrono::system_clock::time_point tp = std::chrono::system_clock::now()) {
  const std::time_t t = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

#ifndef WAV_VERSION
#define WAV_VERSION "unknown"
#endif

inline std::string code_version() { return WAV_VERSION; }

inline nlohmann::json csv_table_json(const std::vector<CsvRow>& rows, const CsvSchema& schema) {
  nlohmann::json table = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json obj = nlohmann::json::object();
    for (std::size_t j = 0; j < schema.size(); ++j) {
      std::visit(
          [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, double>) {
              if (std::isfinite(v)) obj[schema[j].name] = v;
              else obj[schema[j].name] = format_real(v);
            } else {
              obj[schema[j].name] = v;
            }
          },
          row[j]);
    }
    table.push_back(std::move(obj));
  }
  return table;
}

}  // namespace wav
