#ifndef MECO_SOLVER_REPORT_HPP
#define MECO_SOLVER_REPORT_HPP

#include <cstddef>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

namespace meco {

enum class Termination {
  tolerance,   ///< |F(n) - F(n-1)| <= tol, or the dual search closed its bracket
  stagnation,  ///< best value did not improve by more than tol over the window
  max_iters,
};

inline std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::tolerance: return "tolerance";
    case Termination::stagnation: return "stagnation";
    case Termination::max_iters: return "max_iters";
  }
  return "?";
}

/// Trace of an iterative solve. Objective values are in seconds.
struct SolverReport {
  std::string step_rule;
  std::vector<double> objective_history;         ///< F at every iterate (infeasible ones included)
  std::vector<double> best_history;              ///< best feasible F after every iterate
  std::vector<double> subgradient_norm_history;  ///< ||g|| used for each step
  double best_objective = std::numeric_limits<double>::infinity();
  std::vector<double> best_x;
  std::size_t iterations = 0;
  Termination termination = Termination::max_iters;
};

}  // namespace meco

#endif  // MECO_SOLVER_REPORT_HPP
