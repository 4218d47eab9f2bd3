#pragma once

// Derivative-free minimization: GSL's Nelder-Mead simplex with restarts
// from the current optimum.

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <exception>
#include <functional>
#include <limits>
#include <memory>

#include "exst/common.hpp"

namespace exst {

struct OptimConfig {
  int max_evals = 500;        // per run, restarts included separately
  double size_tol = 1e-3;     // simplex characteristic size at convergence
  int restarts = 2;
  double initial_step = 0.5;  // simplex edge length in transformed coordinates

  void validate() const {
    if (max_evals < 1) throw ConfigError("OptimConfig: max_evals must be positive");
    if (!(size_tol > 0.0)) throw ConfigError("OptimConfig: size_tol must be positive");
    if (restarts < 0) throw ConfigError("OptimConfig: restarts must be non-negative");
    if (!(initial_step > 0.0)) throw ConfigError("OptimConfig: initial_step must be positive");
  }
};

struct OptimResult {
  Vector x;
  double fx = kInf;
  long evaluations = 0;
  long failed_evaluations = 0;  // objective threw or returned a non-finite value
  bool converged = false;
};

/// Value substituted for failed objective evaluations so the simplex moves
/// away from them.
inline constexpr double kFailedObjective = 1e100;

namespace detail {

struct NmState {
  const std::function<double(const Vector&)>* f;
  long evals = 0;
  long failed = 0;
  std::exception_ptr fatal;  // configuration or data errors end the run
};

inline double nm_trampoline(const gsl_vector* v, void* params) {
  auto* s = static_cast<NmState*>(params);
  Vector x(static_cast<Index>(v->size));
  for (std::size_t i = 0; i < v->size; ++i) x(static_cast<Index>(i)) = gsl_vector_get(v, i);
  ++s->evals;
  if (s->fatal) return kFailedObjective;
  double y;
  try {
    y = (*s->f)(x);
  } catch (const NumericError&) {
    y = kNaN;
  } catch (const ConvergenceError&) {
    y = kNaN;
  } catch (...) {
    s->fatal = std::current_exception();
    y = kNaN;
  }
  if (!std::isfinite(y)) {
    ++s->failed;
    return kFailedObjective;
  }
  return y;
}

struct GslVectorDeleter {
  void operator()(gsl_vector* v) const { gsl_vector_free(v); }
};
struct GslMinimizerDeleter {
  void operator()(gsl_multimin_fminimizer* m) const { gsl_multimin_fminimizer_free(m); }
};

inline OptimResult nelder_mead_once(const std::function<double(const Vector&)>& f, const Vector& x0,
                                    const OptimConfig& cfg) {
  gsl_set_error_handler_off();
  const std::size_t n = static_cast<std::size_t>(x0.size());
  NmState state{&f, 0, 0, nullptr};
  OptimResult out;
  std::unique_ptr<gsl_vector, GslVectorDeleter> x(gsl_vector_alloc(n)), step(gsl_vector_alloc(n));
  for (std::size_t i = 0; i < n; ++i) gsl_vector_set(x.get(), i, x0(static_cast<Index>(i)));
  gsl_vector_set_all(step.get(), cfg.initial_step);
  std::unique_ptr<gsl_multimin_fminimizer, GslMinimizerDeleter> m(
      gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n));
  gsl_multimin_function fn{&nm_trampoline, n, &state};
  int status = gsl_multimin_fminimizer_set(m.get(), &fn, x.get(), step.get());
  if (state.fatal) std::rethrow_exception(state.fatal);
  if (status != GSL_SUCCESS) throw NumericError("minimize: could not initialize the simplex");
  bool converged = false;
  while (state.evals < cfg.max_evals) {
    status = gsl_multimin_fminimizer_iterate(m.get());
    if (state.fatal) std::rethrow_exception(state.fatal);
    if (status != GSL_SUCCESS) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(m.get()), cfg.size_tol) == GSL_SUCCESS) {
      converged = true;
      break;
    }
  }
  out.x.resize(static_cast<Index>(n));
  for (std::size_t i = 0; i < n; ++i) out.x(static_cast<Index>(i)) = gsl_vector_get(m->x, i);
  out.fx = m->fval;
  out.evaluations = state.evals;
  out.failed_evaluations = state.failed;
  out.converged = converged && out.fx < kFailedObjective;
  return out;
}

}  // namespace detail

/// Minimizes f from x0; after the first run the simplex is rebuilt around
/// the optimum `restarts` times. Numeric and convergence failures of the
/// objective are penalized; if every evaluation fails a NumericError is
/// thrown. Other exceptions propagate.
inline OptimResult minimize(const std::function<double(const Vector&)>& f, const Vector& x0, const OptimConfig& cfg) {
  cfg.validate();
  if (x0.size() == 0) throw ConfigError("minimize: no free parameters");
  OptimResult best = detail::nelder_mead_once(f, x0, cfg);
  long evals = best.evaluations, failed = best.failed_evaluations;
  for (int r = 0; r < cfg.restarts; ++r) {
    OptimConfig c = cfg;
    c.initial_step = cfg.initial_step / (2.0 * (r + 1));
    OptimResult next = detail::nelder_mead_once(f, best.x, c);
    evals += next.evaluations;
    failed += next.failed_evaluations;
    if (next.fx <= best.fx) {
      best = next;
    } else {
      best.converged = best.converged && next.converged;
    }
  }
  best.evaluations = evals;
  best.failed_evaluations = failed;
  if (failed == evals) throw NumericError("minimize: objective failed at every probe");
  return best;
}

}  // namespace exst
