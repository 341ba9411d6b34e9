#include "stas/eval/positions.hpp"

#include <cmath>
#include <numeric>
#include <ostream>

#include <fmt/format.h>

#include "stas/errors.hpp"

namespace stas::eval {

PositionHistogram::PositionHistogram(std::size_t K) : counts_(K, 0.0) {
  if (K == 0) throw ConfigError("position histogram needs K >= 1");
}

void PositionHistogram::add(std::span<const std::size_t> selected) {
  for (auto i : selected)
    if (i < counts_.size()) counts_[i] += 1.0;
}

std::vector<double> PositionHistogram::normalized() const {
  const double total = std::accumulate(counts_.begin(), counts_.end(), 0.0);
  std::vector<double> out(counts_.size(), 0.0);
  if (total > 0.0)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = counts_[i] / total;
  return out;
}

PositionHistogram PositionHistogram::from_distribution(std::vector<double> weights) {
  PositionHistogram h(weights.size());
  h.counts_ = std::move(weights);
  return h;
}

double position_kl(const PositionHistogram& p, const PositionHistogram& q, double eps) {
  if (p.K() != q.K()) throw DimensionError(fmt::format("position_kl: K {} vs {}", p.K(), q.K()));
  const auto pn = p.normalized();
  auto qn = q.normalized();
  for (auto& x : qn) x = std::max(x, eps);
  const double qs = std::accumulate(qn.begin(), qn.end(), 0.0);
  for (auto& x : qn) x /= qs;
  double kl = 0.0;
  for (std::size_t i = 0; i < pn.size(); ++i)
    if (pn[i] > 0.0) kl += pn[i] * std::log(pn[i] / qn[i]);
  return kl;
}

void write_histogram_csv(std::ostream& out,
                         std::span<const std::pair<std::string, PositionHistogram>> models) {
  out << "position";
  for (const auto& [name, h] : models) out << ',' << name;
  out << '\n';
  if (models.empty()) return;
  std::vector<std::vector<double>> norm;
  for (const auto& [name, h] : models) norm.push_back(h.normalized());
  for (std::size_t k = 0; k < models.front().second.K(); ++k) {
    out << k + 1;
    for (const auto& n : norm) out << fmt::format(",{:.6f}", k < n.size() ? n[k] : 0.0);
    out << '\n';
  }
}

}  // namespace stas::eval
