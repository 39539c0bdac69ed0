#pragma once

// Loss bookkeeping shared by the network trainers.

#include <algorithm>
#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include "epiforge/error.hpp"
#include "epiforge/format.hpp"

namespace epiforge {

struct LossRecord {
  int epoch = 0;
  double total = 0.0;
  double data = 0.0;
  double physics = 0.0;
};

struct TrainingHistory {
  std::vector<LossRecord> records;  // every record_every epochs and after the last one
  std::vector<double> trace;        // total loss at every epoch
  int epochs = 0;
  int best_epoch = 0;    // epoch with the lowest total loss
  double seconds = 0.0;  // optimizer loop only

  double seconds_per_epoch() const { return epochs > 0 ? seconds / epochs : 0.0; }
};

/// Thrown when the loss stops being finite; carries what was recorded so far.
class TrainingError : public NumericalError {
 public:
  TrainingError(const std::string& what, double at, TrainingHistory history)
      : NumericalError(what, at), history_(std::move(history)) {}
  const TrainingHistory& history() const { return history_; }

 private:
  TrainingHistory history_;
};

inline void write_history_csv(std::ostream& os, const TrainingHistory& h) {
  os << "epoch,total,data,physics\n";
  for (const auto& r : h.records)
    os << r.epoch << ',' << fmt_double(r.total) << ',' << fmt_double(r.data) << ',' << fmt_double(r.physics) << '\n';
}

/// Centered moving average with a shrinking window at the ends.
inline std::vector<double> moving_average(const std::vector<double>& v, std::size_t window) {
  std::vector<double> out(v.size());
  if (v.empty() || window == 0) return v;
  std::vector<double> prefix(v.size() + 1, 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) prefix[i + 1] = prefix[i] + v[i];
  const std::size_t half = window / 2;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(v.size(), lo + window);
    out[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
  }
  return out;
}

}  // namespace epiforge
