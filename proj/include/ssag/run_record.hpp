#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace ssag {

// One logged solver sample. Optional fields serialize as blanks.
struct RunPoint {
  std::int64_t iter = 0;
  std::int64_t sfo_calls = 0;
  std::optional<double> cpu_seconds;
  double objective = 0.0;
  std::optional<double> gap;
  std::optional<double> accuracy;

  friend bool operator==(const RunPoint&, const RunPoint&) = default;
};

// Time series of one seeded run.
struct RunRecord {
  std::vector<RunPoint> points;

  friend bool operator==(const RunRecord&, const RunRecord&) = default;

  bool empty() const { return points.empty(); }
  const RunPoint& back() const { return points.back(); }
};

}  // namespace ssag
