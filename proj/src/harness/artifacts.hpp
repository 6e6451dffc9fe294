#pragma once

#include <string>
#include <vector>

#include "common.hpp"

namespace canav::harness {

// Exclusive output-directory guard: creates <dir>/.lock, removed on scope
// exit. A pre-existing lock is a runtime error naming the path.
class DirLock {
 public:
  explicit DirLock(const std::string& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::string path_;
};

struct CurvePoint {
  double x = 0;
  double y = 0;
};

struct CurveSeries {
  std::string label;
  std::vector<CurvePoint> points;
};

// Reads (step, sr) pairs from a training-log CSV; malformed rows are skipped
// and counted.
CurveSeries read_sr_curve(const std::string& csv_path, int* skipped = nullptr);

// Standalone SVG: one polyline per series, axes with labels, legend.
void write_plot_svg(const std::vector<CurveSeries>& series,
                    const std::string& out_path, const std::string& x_label,
                    const std::string& y_label);

}  // namespace canav::harness
