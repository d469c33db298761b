#pragma once

#include <span>
#include <vector>

namespace beamgrid {

struct SinkhornOptions {
  double tolerance = 1e-9;  // L1 error of the row marginal
  int max_iterations = 10000;
};

struct TransportPlan {
  std::vector<double> plan;  // n x m, row-major
  double cost = 0.0;         // <plan, C>
  int iterations = 0;
  double marginal_error = 0.0;
};

// Entropic optimal transport between histograms a (size n) and b (size m)
// under the row-major cost matrix C, solved with log-domain Sinkhorn
// iterations and epsilon annealing from max(C) down to epsilon; each level
// finishes with damped Newton steps on the same dual potentials. Zero-mass
// entries are dropped from the support, and a singleton support gets its
// forced coupling directly. Throws IterationLimitError when the marginal
// tolerance is not met within the iteration budget (sweeps and Newton steps
// both count).
TransportPlan sinkhorn(std::span<const double> a, std::span<const double> b, std::span<const double> cost,
                       double epsilon, const SinkhornOptions& options = {});

}  // namespace beamgrid
