#pragma once

// Adaptive Dormand-Prince 5(4) with dense output, plus sign-change events
// refined by bisection on the interpolant.

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/numeric/odeint.hpp>

namespace crnsynth {

struct OdeOptions {
  double abs_tol = 1e-11;
  double rel_tol = 1e-11;
  double initial_step = 1e-3;  // magnitude; the sign follows the direction of time
  double max_step = 0.0;       // 0 = unlimited
  long max_steps = 2000000;
  double event_time_tol = 1e-12;
};

class IntegrationFailure : public std::runtime_error {
 public:
  IntegrationFailure(const std::string& what, double t, std::vector<double> last)
      : std::runtime_error(what), t_last(t), last_state(std::move(last)) {}
  double t_last;
  std::vector<double> last_state;
};

template <class State>
struct Event {
  std::function<double(double, const State&)> g;
  bool terminal = true;
  // +1 only rising, -1 only falling, 0 both
  int direction = 0;
  std::string name;
};

template <class State>
struct EventHit {
  int index = -1;
  double t = 0;
  State x{};
};

enum class OdeStatus { Completed, EventStop, Failed };

template <class State>
struct OdeResult {
  OdeStatus status = OdeStatus::Completed;
  double t = 0;
  State x{};
  std::vector<EventHit<State>> hits;
  long steps = 0;
  std::string message;
};

namespace detail {
template <class State>
std::vector<double> to_vector(const State& x) {
  return std::vector<double>(std::begin(x), std::end(x));
}
template <class State>
bool finite_state(const State& x) {
  for (const auto& v : x)
    if (!std::isfinite(v)) return false;
  return true;
}
}  // namespace detail

// Integrates x' = rhs(x, t) from t0 to t1 (either direction).
// observer(t, x) is called at t0 and after every accepted step (and at stop points).
// project(x) may modify the state after a step (returns true if it did); the
// integrator restarts from the projected state.
template <class State, class Rhs>
OdeResult<State> integrate_ode(Rhs rhs, State x0, double t0, double t1, const OdeOptions& opt,
                               const std::vector<Event<State>>& events = {},
                               const std::function<void(double, const State&)>& observer = {},
                               const std::function<bool(State&)>& project = {}) {
  namespace odeint = boost::numeric::odeint;
  using Stepper = odeint::runge_kutta_dopri5<State>;
  OdeResult<State> res;
  res.t = t0;
  res.x = x0;
  if (observer) observer(t0, x0);
  if (t1 == t0) return res;
  const double dir = t1 > t0 ? 1.0 : -1.0;

  auto sys = [&rhs](const State& x, State& dxdt, double t) { rhs(x, dxdt, t); };
  auto dense = opt.max_step > 0
                   ? odeint::make_dense_output(opt.abs_tol, opt.rel_tol, opt.max_step, Stepper())
                   : odeint::make_dense_output(opt.abs_tol, opt.rel_tol, Stepper());
  double h0 = std::min(opt.initial_step, std::abs(t1 - t0));
  dense.initialize(x0, t0, dir * h0);

  std::vector<double> g_prev(events.size());
  for (size_t k = 0; k < events.size(); ++k) g_prev[k] = events[k].g(t0, x0);

  double t_prev = t0;
  State x_prev = x0;
  State xtmp = x0;
  while (true) {
    if (res.steps >= opt.max_steps) {
      res.status = OdeStatus::Failed;
      res.message = "step limit reached";
      res.t = t_prev;
      res.x = x_prev;
      return res;
    }
    try {
      dense.do_step(sys);
    } catch (const odeint::step_adjustment_error& e) {
      throw IntegrationFailure(std::string("step size underflow: ") + e.what(), t_prev, detail::to_vector(x_prev));
    }
    ++res.steps;
    double t_cur = dense.current_time();
    bool last = dir * (t_cur - t1) >= 0;
    if (last) t_cur = t1;
    State x_cur = x_prev;
    if (last) {
      dense.calc_state(t1, x_cur);
    } else {
      x_cur = dense.current_state();
    }
    if (!detail::finite_state(x_cur) || std::abs(dense.current_time_step()) < 1e-300) {
      throw IntegrationFailure("non-finite state or vanishing step", t_prev, detail::to_vector(x_prev));
    }

    // events inside (t_prev, t_cur]
    int first = -1;
    double t_first = t_cur;
    State x_first = x_prev;
    std::vector<double> g_cur(events.size());
    for (size_t k = 0; k < events.size(); ++k) {
      g_cur[k] = events[k].g(t_cur, x_cur);
      const double ga = g_prev[k], gb = g_cur[k];
      bool crossed = (ga < 0 && gb >= 0) || (ga > 0 && gb <= 0);
      if (!crossed) continue;
      if (events[k].direction > 0 && !(gb > ga)) continue;
      if (events[k].direction < 0 && !(gb < ga)) continue;
      // bisection on the dense interpolant
      double lo = t_prev, hi = t_cur, glo = ga;
      while (std::abs(hi - lo) > opt.event_time_tol) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        dense.calc_state(mid, xtmp);
        const double gm = events[k].g(mid, xtmp);
        if ((glo < 0) == (gm < 0) && gm != 0) {
          lo = mid;
          glo = gm;
        } else {
          hi = mid;
        }
      }
      EventHit<State> hit;
      hit.index = static_cast<int>(k);
      hit.t = hi;
      hit.x = x_prev;
      dense.calc_state(hi, hit.x);
      if (hi == t_cur) hit.x = x_cur;
      if (events[k].terminal && (first < 0 || dir * (hit.t - t_first) < 0)) {
        first = static_cast<int>(k);
        t_first = hit.t;
        x_first = hit.x;
      }
      if (!events[k].terminal) res.hits.push_back(hit);
    }
    if (first >= 0) {
      EventHit<State> hit{first, t_first, x_first};
      // drop non-terminal hits beyond the stop time
      std::vector<EventHit<State>> kept;
      for (auto& h : res.hits)
        if (dir * (h.t - t_first) <= 0) kept.push_back(h);
      kept.push_back(hit);
      res.hits = std::move(kept);
      res.status = OdeStatus::EventStop;
      res.t = t_first;
      res.x = x_first;
      if (observer) observer(t_first, x_first);
      return res;
    }
    g_prev = g_cur;
    if (project) {
      State xp = x_cur;
      if (project(xp)) {
        x_cur = xp;
        if (!last) dense.initialize(x_cur, t_cur, dense.current_time_step());
        for (size_t k = 0; k < events.size(); ++k) g_prev[k] = events[k].g(t_cur, x_cur);
      }
    }
    if (observer) observer(t_cur, x_cur);
    t_prev = t_cur;
    x_prev = x_cur;
    if (last) {
      res.status = OdeStatus::Completed;
      res.t = t1;
      res.x = x_cur;
      return res;
    }
  }
}

}  // namespace crnsynth
