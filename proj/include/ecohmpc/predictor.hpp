#pragma once

#include <filesystem>
#include <vector>

namespace ecohmpc {

/// Lead-vehicle speed samples with linear interpolation. Outside the span the
/// nearest end value is held.
class LeadTrace {
 public:
  LeadTrace() = default;
  LeadTrace(std::vector<double> t, std::vector<double> v);

  /// CSV with columns t_s, v_mps.
  static LeadTrace load_csv(const std::filesystem::path& path);
  static LeadTrace constant(double v, double duration);

  double at(double t) const;
  /// Distance covered from t0 to t1 by exact integration of the interpolant.
  double distance(double t0, double t1) const;
  double t_begin() const { return t_.front(); }
  double t_end() const { return t_.back(); }
  bool empty() const { return t_.empty(); }
  const std::vector<double>& times() const { return t_; }
  const std::vector<double>& speeds() const { return v_; }

 private:
  double integral_to(double t) const;
  std::vector<double> t_, v_;
  std::vector<double> cum_;  // integral of v from t_.front() to t_[i]
};

/// Speed held constant over the horizon: N+1 copies of v_now.
std::vector<double> predict_frozen(double v_now, int N);

/// Exact trace samples at t_now + k dt, k = 0..N.
std::vector<double> predict_prescient(const LeadTrace& trace, double t_now, int N, double dt);

}  // namespace ecohmpc
