#include "ecohmpc/predictor.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "ecohmpc/csv.hpp"
#include "ecohmpc/error.hpp"

namespace ecohmpc {

LeadTrace::LeadTrace(std::vector<double> t, std::vector<double> v) : t_(std::move(t)), v_(std::move(v)) {
  if (t_.empty() || t_.size() != v_.size()) throw DataError("lead trace needs matching, non-empty t and v columns");
  for (std::size_t i = 0; i < t_.size(); ++i) {
    if (i > 0 && !(t_[i] > t_[i - 1])) throw DataError("lead trace times must be strictly ascending");
    if (!(v_[i] >= 0.0)) throw DataError("lead trace speeds must be nonnegative");
  }
  cum_.assign(t_.size(), 0.0);
  for (std::size_t i = 1; i < t_.size(); ++i) cum_[i] = cum_[i - 1] + 0.5 * (v_[i] + v_[i - 1]) * (t_[i] - t_[i - 1]);
}

LeadTrace LeadTrace::load_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  try {
    return LeadTrace(t.column_values("t_s"), t.column_values("v_mps"));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

LeadTrace LeadTrace::constant(double v, double duration) { return LeadTrace({0.0, duration}, {v, v}); }

double LeadTrace::at(double t) const {
  if (t <= t_.front()) return v_.front();
  if (t >= t_.back()) return v_.back();
  const auto i = static_cast<std::size_t>(std::upper_bound(t_.begin(), t_.end(), t) - t_.begin()) - 1;
  const double a = (t - t_[i]) / (t_[i + 1] - t_[i]);
  return v_[i] + a * (v_[i + 1] - v_[i]);
}

double LeadTrace::integral_to(double t) const {
  if (t <= t_.front()) return (t - t_.front()) * v_.front();
  if (t >= t_.back()) return cum_.back() + (t - t_.back()) * v_.back();
  const auto i = static_cast<std::size_t>(std::upper_bound(t_.begin(), t_.end(), t) - t_.begin()) - 1;
  return cum_[i] + 0.5 * (v_[i] + at(t)) * (t - t_[i]);
}

double LeadTrace::distance(double t0, double t1) const { return integral_to(t1) - integral_to(t0); }

std::vector<double> predict_frozen(double v_now, int N) {
  if (N < 0) throw std::invalid_argument("horizon must be nonnegative");
  if (!(v_now >= 0.0)) throw std::invalid_argument("predict_frozen: negative speed");
  return std::vector<double>(static_cast<std::size_t>(N) + 1, v_now);
}

std::vector<double> predict_prescient(const LeadTrace& trace, double t_now, int N, double dt) {
  if (N < 0) throw std::invalid_argument("horizon must be nonnegative");
  std::vector<double> out(static_cast<std::size_t>(N) + 1);
  for (int k = 0; k <= N; ++k) out[static_cast<std::size_t>(k)] = trace.at(t_now + k * dt);
  return out;
}

}  // namespace ecohmpc
