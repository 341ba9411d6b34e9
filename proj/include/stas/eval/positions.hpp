#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace stas::eval {

// Counts of selected sentence positions 1..K.
class PositionHistogram {
 public:
  explicit PositionHistogram(std::size_t K = 12);

  // Adds 0-based selected indices; indices >= K are ignored.
  void add(std::span<const std::size_t> selected);

  std::size_t K() const { return counts_.size(); }
  const std::vector<double>& counts() const { return counts_; }
  // Counts divided by their total; all zeros when nothing was counted.
  std::vector<double> normalized() const;

  static PositionHistogram from_distribution(std::vector<double> weights);

 private:
  std::vector<double> counts_;
};

// KL(p || q) with q floored at eps and renormalized; p_i = 0 terms vanish.
double position_kl(const PositionHistogram& p, const PositionHistogram& q, double eps = 1e-9);

// Header "position,<name>..." then one row per position with normalized mass.
void write_histogram_csv(std::ostream& out,
                         std::span<const std::pair<std::string, PositionHistogram>> models);

}  // namespace stas::eval
