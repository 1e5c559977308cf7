#include "ecohmpc/controller.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ecohmpc/config.hpp"
#include "ecohmpc/error.hpp"
#include "ecohmpc/log.hpp"

namespace ecohmpc {

void ControllerConfig::validate() const {
  if (N < 2) throw std::invalid_argument("controller horizon N must be at least 2");
  if (!(dt > 0.0)) throw std::invalid_argument("controller dt must be positive");
  for (double z : zeta)
    if (!(z >= 0.0)) throw std::invalid_argument("controller weights must be nonnegative");
  if (!(d_m > 0.0)) throw std::invalid_argument("stop-line margin d_m must be positive");
  if (!(dF_t_max >= 0.0) || !(sensor_range > 0.0)) throw std::invalid_argument("bad jerk band or sensor range");
  if (!(a_comf > 0.0) || !(a_term > 0.0)) throw std::invalid_argument("decelerations must be positive");
  if (node_limit < 1) throw std::invalid_argument("node_limit must be positive");
}

ControllerConfig ControllerConfig::from_config(const Config& cfg) {
  ControllerConfig c;
  c.N = cfg.integer_or("controller.N", c.N);
  c.dt = cfg.number_or("controller.dt", c.dt);
  for (int i = 0; i < 6; ++i) c.zeta[static_cast<std::size_t>(i)] = cfg.number("controller.zeta" + std::to_string(i + 1));
  c.dF_t_max = cfg.number_or("controller.dF_t_max", c.dF_t_max);
  c.d_m = cfg.number_or("controller.d_m", c.d_m);
  c.sensor_range = cfg.number_or("controller.sensor_range", c.sensor_range);
  c.warm_start = cfg.boolean_or("controller.warm_start", c.warm_start);
  c.a_comf = cfg.number_or("controller.a_comf", c.a_comf);
  c.a_term = cfg.number_or("controller.a_term", c.a_term);
  c.terminal_gap = cfg.boolean_or("controller.terminal_gap", c.terminal_gap);
  c.stop_margin = cfg.number_or("controller.stop_margin", c.stop_margin);
  c.emergency_weight = cfg.number_or("controller.emergency_weight", c.emergency_weight);
  c.v_hold = cfg.number_or("controller.v_hold", c.v_hold);
  c.node_limit = cfg.integer_or("controller.node_limit", c.node_limit);
  c.time_limit_ms = cfg.number_or("controller.time_limit_ms", c.time_limit_ms);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  return c;
}

const char* to_string(ControllerKind k) { return k == ControllerKind::hmpc ? "hmpc" : "baseline"; }

const char* to_string(Mode m) {
  switch (m) {
    case Mode::following: return "following";
    case Mode::greenwave: return "greenwave";
    case Mode::stopping: return "stopping";
  }
  return "?";
}

StateMatrices state_matrices(const VehicleParams& p, double dt, double theta, double v_p, double v_p_next) {
  const double psi = p.aero_factor() * p.p1;
  const double w1 = dt / p.m_eq * (p.m_v * p.g * std::sin(theta) + p.c_r * p.m_v * p.g * std::cos(theta) + p.aero_factor() * p.p2);
  const double A11 = 1.0 - dt / p.m_eq * psi;
  const double A21 = 0.5 * dt * (2.0 - dt / p.m_eq * psi);
  const double B11 = dt / p.m_eq;
  const double B21 = dt * dt / (2.0 * p.m_eq);
  StateMatrices m;
  m.A = {{{A11, 0.0, 0.0}, {-A21, 1.0, 0.0}, {-A21, 0.0, 1.0}}};
  m.B = {{{B11, -B11}, {-B21, B21}, {-B21, B21}}};
  m.w = {-w1, 0.5 * dt * (v_p + v_p_next + w1), 0.5 * dt * w1};
  return m;
}

namespace {

void require_size(const std::vector<double>& v, std::size_t n, const char* what) {
  if (v.size() != n) throw std::invalid_argument(std::string(what) + " has the wrong length");
}

std::string idx(const char* base, int k) { return std::string(base) + "_" + std::to_string(k); }

// Largest f_app(v, 0) over a speed range; f_app is convex so the ends suffice.
double glide_bound(const QuadCoeffs& f, double lo, double hi) {
  return std::max({f(lo, 0.0), f(hi, 0.0), 0.0}) + 1.0;
}

BuiltProblem build_impl(ControllerKind kind, const MpcState& st, const HorizonInputs& in, const GearLimits& gl,
                        const ControllerConfig& cfg, const VehicleParams& vp) {
  cfg.validate();
  const int N = cfg.N;
  const auto Nz = static_cast<std::size_t>(N);
  require_size(in.v_lead, Nz + 1, "lead prediction");
  require_size(in.theta, Nz, "grade prediction");
  require_size(in.v_min, Nz + 1, "v_min");
  require_size(in.v_max, Nz + 1, "v_max");
  if (in.stop_active && in.stop_at.size() != Nz + 1) throw std::invalid_argument("stop flags have the wrong length");
  if (!in.hold.empty() && in.hold.size() != Nz) throw std::invalid_argument("hold flags have the wrong length");
  const bool hybrid = kind == ControllerKind::hmpc;
  if (!hybrid && in.mode == Mode::greenwave) throw std::invalid_argument("baseline has no green-wave mode");
  if (in.mode == Mode::stopping && !in.stop_active) throw std::invalid_argument("stopping mode needs an active stop line");
  if (in.terminal_braking && !in.stop_active) throw std::invalid_argument("terminal braking needs an active stop line");
  if (in.mode == Mode::following && !in.lead_visible) throw std::invalid_argument("following mode needs a visible lead");

  const auto& z = cfg.zeta;
  const bool use_e3 = in.lead_visible && in.mode != Mode::greenwave && z[3] > 0.0;
  const bool use_e4 = in.stop_active && in.mode == Mode::stopping && z[4] > 0.0;
  const bool track = hybrid && in.mode == Mode::greenwave && z[5] > 0.0;

  BuiltProblem bp;
  bp.kind = kind;
  Problem& p = bp.problem;
  Layout& L = bp.layout;
  L.N = N;
  for (int k = 0; k <= N; ++k) {
    const auto kz = static_cast<std::size_t>(k);
    const double lo = k == 0 ? st.v_h : in.v_min[kz], hi = k == 0 ? st.v_h : in.v_max[kz];
    L.v.push_back(p.add_var(idx("v", k), lo, hi, 10.0));
    if (in.lead_visible) {
      L.d.push_back(k == 0 ? p.add_var(idx("d_rel", k), st.d_rel, st.d_rel, 30.0) : p.add_var(idx("d_rel", k), -kInf, kInf, 30.0));
    }
    if (in.stop_active) {
      const double lo_D = (k > 0 && in.stop_at[kz]) ? 0.0 : -kInf;
      L.D.push_back(k == 0 ? p.add_var(idx("d_its", k), st.d_ITS, st.d_ITS, 100.0) : p.add_var(idx("d_its", k), lo_D, kInf, 100.0));
    }
  }
  for (int k = 0; k < N; ++k) {
    const auto kz = static_cast<std::size_t>(k);
    const double th = in.theta[kz];
    L.Ft.push_back(p.add_var(idx("F_t", k), 0.0, gl.F_t_max, 1e4));
    L.Fb.push_back(p.add_var(idx("F_b", k), 0.0, vp.F_b_max, 1e4));
    // Standstill hold: cancels at most the model resistance at zero speed.
    const double R0 = std::max(0.0, resistance_force(0.0, th, vp, AeroMode::linear));
    const bool hold = !in.hold.empty() && in.hold[kz];
    L.Fh.push_back(p.add_var(idx("F_h", k), 0.0, hold ? R0 : 0.0, 500.0));
    if (hybrid) {
      L.P.push_back(p.add_var(idx("P_ice", k), 0.0, gl.P_max, 1e5));
      L.n.push_back(p.add_var(idx("n", k), 0.0, 1.0, 1.0));
      p.mark_binary(L.n.back());
      L.e1.push_back(p.add_var(idx("eps1", k), -1.0, 1.0, 1.0));
    }
    L.e2.push_back(p.add_var(idx("eps2", k), 0.0, kInf, 1e3));
    if (use_e3) L.e3.push_back(p.add_var(idx("eps3", k), 0.0, kInf, 10.0));
    if (use_e4) L.e4.push_back(p.add_var(idx("eps4", k), 0.0, kInf, 10.0));
    if (in.emergency && in.lead_visible) L.eE.push_back(p.add_var(idx("eps_safe", k), 0.0, kInf, 1.0));
  }

  auto at = [](const std::vector<int>& v, int k) { return v[static_cast<std::size_t>(k)]; };
  for (int k = 0; k < N; ++k) {
    const auto kz = static_cast<std::size_t>(k);
    const StateMatrices M = state_matrices(vp, cfg.dt, in.theta[kz], in.v_lead[kz], in.v_lead[kz + 1]);
    const int v = at(L.v, k), v1 = at(L.v, k + 1), Ft = at(L.Ft, k), Fb = at(L.Fb, k), Fh = at(L.Fh, k);
    // x+ - A x - B u = w; the hold force enters like traction.
    p.add_row({idx("dyn_v", k), {{v1, 1.0}, {v, -M.A[0][0]}, {Ft, -M.B[0][0]}, {Fh, -M.B[0][0]}, {Fb, -M.B[0][1]}}, M.w[0], M.w[0]});
    if (in.lead_visible) {
      const int d = at(L.d, k), d1 = at(L.d, k + 1);
      p.add_row({idx("dyn_d_rel", k),
                 {{d1, 1.0}, {v, -M.A[1][0]}, {d, -M.A[1][1]}, {Ft, -M.B[1][0]}, {Fh, -M.B[1][0]}, {Fb, -M.B[1][1]}},
                 M.w[1], M.w[1]});
    }
    if (in.stop_active) {
      const int D = at(L.D, k), D1 = at(L.D, k + 1);
      p.add_row({idx("dyn_d_its", k),
                 {{D1, 1.0}, {v, -M.A[2][0]}, {D, -M.A[2][2]}, {Ft, -M.B[2][0]}, {Fh, -M.B[2][0]}, {Fb, -M.B[2][1]}},
                 M.w[2], M.w[2]});
    }
    // Jerk band, soft.
    const int e2 = at(L.e2, k);
    if (k == 0) {
      p.add_row({idx("jerk_up", k), {{Ft, 1.0}, {e2, -1.0}}, -kInf, cfg.dF_t_max + st.F_t_prev});
      p.add_row({idx("jerk_dn", k), {{Ft, -1.0}, {e2, -1.0}}, -kInf, cfg.dF_t_max - st.F_t_prev});
    } else {
      const int Fp = at(L.Ft, k - 1);
      p.add_row({idx("jerk_up", k), {{Ft, 1.0}, {Fp, -1.0}, {e2, -1.0}}, -kInf, cfg.dF_t_max});
      p.add_row({idx("jerk_dn", k), {{Ft, -1.0}, {Fp, 1.0}, {e2, -1.0}}, -kInf, cfg.dF_t_max});
    }
    const QuadCoeffs& f = gl.f_app;
    if (hybrid) {
      const int n = at(L.n, k), P = at(L.P, k), e1 = at(L.e1, k);
      if (k == 0)
        p.add_row({idx("switch", k), {{e1, 1.0}, {n, -1.0}}, -static_cast<double>(st.n_prev), -static_cast<double>(st.n_prev)});
      else
        p.add_row({idx("switch", k), {{e1, 1.0}, {n, -1.0}, {at(L.n, k - 1), 1.0}}, 0.0, 0.0});
      p.add_row({idx("traction_on", k), {{Ft, 1.0}, {n, -gl.F_t_max}}, -kInf, 0.0});
      p.add_row({idx("power_on", k), {{P, 1.0}, {n, -gl.P_max}}, -kInf, 0.0});
      // f_app(v, F) - M (1 - n) <= P_ICE with the smallest valid M.
      const double Mk = k == 0 ? glide_bound(f, st.v_h, st.v_h) : glide_bound(f, in.v_min[kz], in.v_max[kz]);
      p.add_qrow({idx("power_fit", k),
                  {{v, v, 2.0 * f.x20}, {Ft, Ft, 2.0 * f.x02}, {std::min(v, Ft), std::max(v, Ft), f.x11}},
                  {{v, f.x10}, {Ft, f.x01}, {n, Mk}, {P, -1.0}},
                  f.x00 - Mk});
      p.add_lin_cost(P, cfg.dt);
      if (z[1] > 0.0) p.add_quad_cost(e1, e1, 2.0 * z[1]);
    } else {
      // The baseline pays the surrogate power directly.
      p.add_quad_cost(v, v, 2.0 * f.x20 * cfg.dt);
      p.add_quad_cost(Ft, Ft, 2.0 * f.x02 * cfg.dt);
      p.add_quad_cost(v, Ft, f.x11 * cfg.dt);
      p.add_lin_cost(v, f.x10 * cfg.dt);
      p.add_lin_cost(Ft, f.x01 * cfg.dt);
      p.c0 += f.x00 * cfg.dt;
    }
    if (z[0] > 0.0) p.add_quad_cost(Fb, Fb, 2.0 * z[0]);
    if (z[2] > 0.0) p.add_quad_cost(e2, e2, 2.0 * z[2]);
  }
  // State rows at k = 1..N.
  for (int k = 1; k <= N; ++k) {
    const int v = at(L.v, k);
    if (in.lead_visible) {
      const int d = at(L.d, k);
      SparseVec safe{{d, 1.0}, {v, -vp.h_s}};
      if (in.emergency) {
        const int eE = at(L.eE, k - 1);
        safe.emplace_back(eE, 1.0);
        p.add_quad_cost(eE, eE, 2.0 * cfg.emergency_weight);
      }
      p.add_row({idx("safe_gap", k), safe, vp.d_min, kInf});
      if (use_e3) {
        const int e3 = at(L.e3, k - 1);
        p.add_row({idx("desired_gap", k), {{d, 1.0}, {v, -vp.h_c}, {e3, -1.0}}, -kInf, vp.d_max});
        p.add_quad_cost(e3, e3, 2.0 * z[3]);
      }
    }
    if (use_e4) {
      const int e4 = at(L.e4, k - 1);
      p.add_row({idx("stop_line", k), {{at(L.D, k), 1.0}, {e4, -1.0}}, -kInf, cfg.d_m});
      p.add_quad_cost(e4, e4, 2.0 * z[4]);
    }
    if (track) {
      p.add_quad_cost(v, v, 2.0 * z[5]);
      p.add_lin_cost(v, -2.0 * z[5] * in.v_ref);
      p.c0 += z[5] * in.v_ref * in.v_ref;
    }
  }
  if (in.lead_visible && cfg.terminal_gap) {
    // Braking at a from v_N to v_p keeps d_min + h_s v_p:
    // u^2 / (2 a) - h_s u + h_s v_N - d_N <= -d_min with u >= max(0, v_N - v_p).
    // Where the free u loosens the row, the plain safe-gap row at N dominates.
    const int vN = at(L.v, N), dN = at(L.d, N);
    const double vl = in.v_lead[Nz], a = cfg.a_term;
    const int u = p.add_var(idx("closing", N), 0.0, kInf, 1.0);
    p.add_row({idx("closing", N), {{u, 1.0}, {vN, -1.0}}, -vl, kInf});
    SparseVec lin{{u, -vp.h_s}, {vN, vp.h_s}, {dN, -1.0}};
    if (in.emergency) lin.emplace_back(at(L.eE, N - 1), -1.0);
    p.add_qrow({"terminal_gap", {{u, u, 1.0 / a}}, lin, vp.d_min});
  }
  if (in.terminal_braking) {
    const int vN = at(L.v, N), DN = at(L.D, N);
    p.add_qrow({"terminal_braking", {{vN, vN, 2.0}}, {{DN, -2.0 * cfg.a_term}}, 0.0});
  }
  p.validate();
  return bp;
}

}  // namespace

BuiltProblem build_following(const MpcState& st, const HorizonInputs& in, const GearLimits& gl,
                             const ControllerConfig& cfg, const VehicleParams& vp) {
  if (in.stop_active || in.mode != Mode::following) throw std::invalid_argument("following problem takes no stop line");
  return build_impl(ControllerKind::hmpc, st, in, gl, cfg, vp);
}

BuiltProblem build_urban(const MpcState& st, const HorizonInputs& in, const GearLimits& gl,
                         const ControllerConfig& cfg, const VehicleParams& vp) {
  return build_impl(ControllerKind::hmpc, st, in, gl, cfg, vp);
}

BuiltProblem build_baseline(const MpcState& st, const HorizonInputs& in, const GearLimits& gl,
                            const ControllerConfig& cfg, const VehicleParams& vp) {
  return build_impl(ControllerKind::baseline, st, in, gl, cfg, vp);
}

MpcSolution extract(const BuiltProblem& bp, const std::vector<double>& x) {
  const Layout& L = bp.layout;
  MpcSolution s;
  auto fill = [&](const std::vector<int>& ids, std::vector<double>& out, std::size_t len) {
    out.assign(len, 0.0);
    for (std::size_t k = 0; k < ids.size() && k < len; ++k) out[k] = x[static_cast<std::size_t>(ids[k])];
  };
  const auto N = static_cast<std::size_t>(L.N);
  fill(L.P, s.P_ICE, N);
  fill(L.Ft, s.F_t, N);
  fill(L.Fb, s.F_b, N);
  fill(L.Fh, s.F_h, N);
  fill(L.e1, s.eps1, N);
  fill(L.e2, s.eps2, N);
  fill(L.e3, s.eps3, N);
  fill(L.e4, s.eps4, N);
  fill(L.v, s.v_h, N + 1);
  fill(L.d, s.d_rel, N + 1);
  fill(L.D, s.d_ITS, N + 1);
  if (L.n.empty()) {
    s.n.assign(N, 1.0);
  } else {
    fill(L.n, s.n, N);
    for (double& v : s.n) v = v >= 0.5 ? 1.0 : 0.0;
  }
  s.objective = bp.problem.objective(x);
  return s;
}

std::vector<double> binaries_of(const BuiltProblem& bp, const std::vector<double>& x) {
  std::vector<double> b;
  for (int j : bp.problem.binaries) b.push_back(x[static_cast<std::size_t>(j)] >= 0.5 ? 1.0 : 0.0);
  return b;
}

MpcSession::MpcSession(ControllerKind kind, ControllerConfig cfg, VehicleParams vp)
    : kind_(kind), cfg_(std::move(cfg)), vp_(std::move(vp)) {
  cfg_.validate();
  vp_.validate();
}

BuiltProblem MpcSession::build(const MpcState& st, const HorizonInputs& in, const GearLimits& gl) const {
  return kind_ == ControllerKind::hmpc ? build_urban(st, in, gl, cfg_, vp_) : build_baseline(st, in, gl, cfg_, vp_);
}

MpcStep MpcSession::step(const MpcState& st, HorizonInputs in, const GearLimits& gl) {
  const auto N = static_cast<std::size_t>(cfg_.N);
  MpcStep out;
  // Hold force where the bus is, or was last planned to be, at a standstill.
  if (in.hold.empty()) {
    in.hold.assign(N, false);
    for (std::size_t k = 0; k < N; ++k) {
      bool h = st.v_h <= cfg_.v_hold && k == 0;
      if (prev_) {
        const std::size_t j = std::min(prev_->v_h.size() - 1, k + static_cast<std::size_t>(prev_age_) + 1);
        h = h || prev_->v_h[j] <= cfg_.v_hold;
      }
      in.hold[k] = h || st.v_h <= cfg_.v_hold;
    }
  }

  MiqcqpOptions mo;
  mo.node_limit = cfg_.node_limit;
  mo.time_limit_ms = cfg_.time_limit_ms;

  auto solve = [&](const BuiltProblem& bp) {
    if (kind_ == ControllerKind::baseline) return solve_qcqp(bp.problem, mo.qp);
    mo.warm_binaries.clear();
    if (cfg_.warm_start && prev_) {
      for (std::size_t k = 0; k < N; ++k) {
        const std::size_t j = std::min(N - 1, k + static_cast<std::size_t>(prev_age_) + 1);
        mo.warm_binaries.push_back(prev_->n[j]);
      }
    }
    return solve_miqcqp(bp.problem, mo);
  };

  BuiltProblem bp = build(st, in, gl);
  SolveReport rep = solve(bp);
  if (rep.status == SolveStatus::infeasible) {
    // Allow the hold force everywhere, then soften the gap rows.
    in.hold.assign(N, true);
    bp = build(st, in, gl);
    rep = solve(bp);
    if (rep.status == SolveStatus::infeasible && in.lead_visible && !in.emergency) {
      in.emergency = true;
      out.emergency = true;
      out.event = "emergency_gap";
      bp = build(st, in, gl);
      rep = solve(bp);
    }
  }
  out.report = rep;
  last_ = bp;
  if (rep.status == SolveStatus::optimal) {
    out.plan = extract(bp, rep.x);
    out.plan.status = rep.status;
    prev_ = out.plan;
    prev_age_ = 0;
    out.F_t = out.plan.F_t[0];
    out.F_b = out.plan.F_b[0];
    out.P_ICE = out.plan.P_ICE[0];
    out.n = static_cast<int>(out.plan.n[0]);
    return out;
  }
  out.fallback = true;
  if (!out.event.empty()) out.event += ";";
  out.event += std::string("solver_") + to_string(rep.status);
  log_info("controller fallback: " + std::string(to_string(rep.status)) + " " + rep.message);
  if (prev_ && static_cast<std::size_t>(prev_age_ + 1) < N) {
    ++prev_age_;
    const auto j = static_cast<std::size_t>(prev_age_);
    out.plan = *prev_;
    out.F_t = prev_->F_t[j];
    out.F_b = prev_->F_b[j];
    out.P_ICE = prev_->P_ICE[j];
    out.n = static_cast<int>(prev_->n[j]);
    return out;
  }
  if (!rep.x.empty()) {
    // Limit status with an incumbent but no usable previous plan.
    out.plan = extract(bp, rep.x);
    out.F_t = out.plan.F_t[0];
    out.F_b = out.plan.F_b[0];
    out.P_ICE = out.plan.P_ICE[0];
    out.n = static_cast<int>(out.plan.n[0]);
    prev_ = out.plan;
    prev_age_ = 0;
    return out;
  }
  // Nothing to fall back on: brake with the engine in its previous state.
  prev_.reset();
  out.F_t = 0.0;
  out.F_b = vp_.F_b_max;
  out.n = kind_ == ControllerKind::baseline ? 1 : st.n_prev;
  out.event += ";full_brake";
  return out;
}

}  // namespace ecohmpc
