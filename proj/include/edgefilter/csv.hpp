#pragma once

// CSV emission shared by every experiment output. Floats are serialized
// with 9 significant digits so reruns compare byte-identically.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "edgefilter/errors.hpp"

namespace edgefilter {

inline std::string fmt_float(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

struct MetricsRecord {
  std::string run_id;
  std::uint64_t seed = 0;
  int epoch = 0;
  std::string scope;  // train | val | block-density | tta
  std::string key;
  double value = 0.0;
};

class CsvFile {
 public:
  CsvFile(const std::string& path, const std::string& header) : path_(path) {
    const bool fresh = !std::filesystem::exists(path) ||
                       std::filesystem::file_size(path) == 0;
    out_.open(path, std::ios::app);
    if (!out_) throw FormatError(path + ": cannot open for writing");
    if (fresh) out_ << header << "\n";
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << "\n";
  }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ofstream out_;
};

inline void write_metrics_csv(const std::string& path,
                              const std::vector<MetricsRecord>& records) {
  CsvFile csv(path, "run_id,seed,epoch,scope,key,value");
  for (const auto& r : records)
    csv.row({r.run_id, std::to_string(r.seed), std::to_string(r.epoch),
             r.scope, r.key, fmt_float(r.value)});
}

}  // namespace edgefilter
