#include "ecohmpc/greenwave.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <json.hpp>
#include <stdexcept>

#include "ecohmpc/csv.hpp"
#include "ecohmpc/error.hpp"

namespace ecohmpc {

void SignalSchedule::validate() const {
  if (!(s >= 0.0)) throw DataError("signal " + id + ": negative position");
  if (phases.empty()) throw DataError("signal " + id + ": no phases");
  for (std::size_t j = 0; j < phases.size(); ++j) {
    if (!(phases[j].g < phases[j].r)) throw DataError("signal " + id + ": green must start before red");
    if (j > 0 && !(phases[j - 1].r < phases[j].g)) throw DataError("signal " + id + ": phases overlap or touch");
  }
}

bool SignalSchedule::is_red(double t) const {
  for (const auto& p : phases) {
    if (t < p.g) return true;
    if (t < p.r) return false;
  }
  return true;
}

std::vector<Phase> SignalSchedule::upcoming(double t, std::size_t max_count) const {
  std::vector<Phase> out;
  for (const auto& p : phases) {
    if (p.r > t) out.push_back(p);
    if (out.size() == max_count) break;
  }
  return out;
}

void Spat::validate() const {
  for (const auto& sg : signals) sg.validate();
  for (const auto& st : stops) {
    if (!(st.dwell > 0.0)) throw DataError("stop " + st.id + ": dwell must be positive");
    if (!(st.s >= 0.0)) throw DataError("stop " + st.id + ": negative position");
  }
  for (std::size_t i = 1; i < signals.size(); ++i)
    if (!(signals[i].s > signals[i - 1].s)) throw DataError("signals must be ordered by position");
  for (std::size_t i = 1; i < stops.size(); ++i)
    if (!(stops[i].s > stops[i - 1].s)) throw DataError("stops must be ordered by position");
}

Spat Spat::parse_json(const std::string& text, const std::string& origin) {
  Spat spat;
  try {
    const auto j = nlohmann::json::parse(text);
    auto id_of = [](const nlohmann::json& e, std::size_t i) {
      if (!e.contains("id")) return std::to_string(i);
      return e.at("id").is_string() ? e.at("id").get<std::string>() : e.at("id").dump();
    };
    if (j.contains("signals")) {
      std::size_t i = 0;
      for (const auto& e : j.at("signals")) {
        SignalSchedule sg;
        sg.id = id_of(e, i++);
        sg.s = e.at("s_m").get<double>();
        for (const auto& p : e.at("phases")) sg.phases.push_back({p.at("g_s").get<double>(), p.at("r_s").get<double>()});
        spat.signals.push_back(std::move(sg));
      }
    }
    if (j.contains("stops")) {
      std::size_t i = 0;
      for (const auto& e : j.at("stops")) {
        BusStop st;
        st.id = id_of(e, i++);
        st.s = e.at("s_m").get<double>();
        st.dwell = e.value("dwell_s", 10.0);
        spat.stops.push_back(std::move(st));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(origin + ": " + e.what());
  }
  try {
    spat.validate();
  } catch (const DataError& e) {
    throw DataError(origin + ": " + e.what());
  }
  return spat;
}

Spat Spat::load_json(const std::filesystem::path& path) { return parse_json(read_text_file(path), path.string()); }

std::optional<SpeedInterval> gwos_interval(double d, Phase phase, double v_min, double v_max) {
  if (!(d > 0.0)) throw std::invalid_argument("gwos_interval: distance to the signal must be positive");
  if (!(phase.g < phase.r)) throw std::invalid_argument("gwos_interval: green must start before red");
  if (!(phase.r > 0.0)) return std::nullopt;
  const double lo = std::max(d / phase.r, v_min);
  const double hi = std::min(phase.g > 0.0 ? d / phase.g : std::numeric_limits<double>::infinity(), v_max);
  if (!(lo <= hi)) return std::nullopt;
  return SpeedInterval{lo, hi};
}

const char* to_string(RefMode m) {
  switch (m) {
    case RefMode::greenwave: return "greenwave";
    case RefMode::set_speed: return "set_speed";
    case RefMode::stopping: return "stopping";
  }
  return "?";
}

ReferenceSpeed reference_speed(double host_pos, double now, const Spat& spat, const std::vector<bool>& stop_served,
                               double v_set, double v_min, double v_max, const GreenwaveOptions& opt) {
  ReferenceSpeed out;
  out.v_ref = v_set;
  int next_signal = -1;
  for (std::size_t i = 0; i < spat.signals.size(); ++i) {
    if (spat.signals[i].s > host_pos) {
      next_signal = static_cast<int>(i);
      break;
    }
  }
  int next_stop = -1;
  for (std::size_t i = 0; i < spat.stops.size(); ++i) {
    const bool served = i < stop_served.size() && stop_served[i];
    if (!served && spat.stops[i].s >= host_pos) {
      next_stop = static_cast<int>(i);
      break;
    }
  }
  const bool stop_first =
      next_stop >= 0 && (next_signal < 0 || spat.stops[static_cast<std::size_t>(next_stop)].s <= spat.signals[static_cast<std::size_t>(next_signal)].s);
  if (stop_first) {
    out.mode = RefMode::stopping;
    out.v_ref = 0.0;
    out.stop = next_stop;
    return out;
  }
  if (next_signal < 0) return out;
  out.signal = next_signal;
  const auto& sg = spat.signals[static_cast<std::size_t>(next_signal)];
  const double d = sg.s - host_pos;
  for (const auto& p : sg.upcoming(now + opt.arrival_margin, opt.max_phases)) {
    const Phase rel{p.g - now, p.r - now - opt.arrival_margin};
    if (!(rel.g < rel.r)) continue;
    if (const auto iv = gwos_interval(d, rel, v_min, v_max)) {
      out.mode = RefMode::greenwave;
      out.v_ref = iv->lo;
      out.target = p;
      return out;
    }
  }
  return out;
}

}  // namespace ecohmpc
