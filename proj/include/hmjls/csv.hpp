#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hmjls {

inline std::string csv_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_int(long long v) { return std::to_string(v); }

/// Writes rows to <path>.tmp and renames on close, so readers never observe
/// a partially written file.
class CsvWriter {
 public:
  explicit CsvWriter(std::filesystem::path path)
      : path_(std::move(path)), tmp_(path_.string() + ".tmp"), os_(tmp_, std::ios::trunc) {
    if (!os_) throw std::runtime_error("cannot open " + tmp_.string());
  }

  ~CsvWriter() {
    if (open_) {
      os_.close();
      std::error_code ec;
      std::filesystem::remove(tmp_, ec);
    }
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) os_ << ',';
      os_ << cells[i];
    }
    os_ << '\n';
  }

  void close() {
    if (!open_) return;
    os_.flush();
    if (!os_) throw std::runtime_error("write failed for " + tmp_.string());
    os_.close();
    std::filesystem::rename(tmp_, path_);
    open_ = false;
  }

 private:
  std::filesystem::path path_, tmp_;
  std::ofstream os_;
  bool open_ = true;
};

}  // namespace hmjls
