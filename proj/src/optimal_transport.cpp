#include "beamgrid/optimal_transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "beamgrid/error.hpp"

namespace beamgrid {

namespace {

// Tolerance used on the intermediate annealing levels.
constexpr double kCoarseTolerance = 1e-6;
// Plain scaling sweeps per level before switching to Newton steps.
constexpr int kSweepsPerLevel = 20;

// In-place Cholesky solve of the dense SPD system A x = b (row-major, N x N).
bool cholesky_solve(std::vector<double>& a, std::size_t n, std::vector<double>& x) {
  for (std::size_t k = 0; k < n; ++k) {
    double d = a[k * n + k];
    for (std::size_t p = 0; p < k; ++p) d -= a[k * n + p] * a[k * n + p];
    if (!(d > 0.0)) return false;
    d = std::sqrt(d);
    a[k * n + k] = d;
    for (std::size_t i = k + 1; i < n; ++i) {
      double s = a[i * n + k];
      for (std::size_t p = 0; p < k; ++p) s -= a[i * n + p] * a[k * n + p];
      a[i * n + k] = s / d;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = x[i];
    for (std::size_t p = 0; p < i; ++p) s -= a[i * n + p] * x[p];
    x[i] = s / a[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = x[i];
    for (std::size_t p = i + 1; p < n; ++p) s -= a[p * n + i] * x[p];
    x[i] = s / a[i * n + i];
  }
  return true;
}

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

std::vector<std::size_t> support(std::span<const double> h) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (h[i] > 0.0) idx.push_back(i);
  }
  return idx;
}

}  // namespace

TransportPlan sinkhorn(std::span<const double> a, std::span<const double> b, std::span<const double> cost,
                       double epsilon, const SinkhornOptions& options) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  require(n > 0 && m > 0, "transport between empty histograms");
  require(cost.size() == n * m, "cost matrix has the wrong size");
  require(epsilon > 0.0, "epsilon must be positive");
  for (double x : a) require(x >= 0.0, "histogram entries must be non-negative");
  for (double x : b) require(x >= 0.0, "histogram entries must be non-negative");

  const std::vector<std::size_t> rows = support(a);
  const std::vector<std::size_t> cols = support(b);
  require(!rows.empty() && !cols.empty(), "histogram has no mass");
  double mass_a = 0.0;
  double mass_b = 0.0;
  for (auto i : rows) mass_a += a[i];
  for (auto j : cols) mass_b += b[j];
  require(std::abs(mass_a - mass_b) <= 1e-9 * std::max(1.0, mass_a), "histograms carry different mass");

  const std::size_t nr = rows.size();
  const std::size_t nc = cols.size();
  std::vector<double> c(nr * nc);
  double c_max = 0.0;
  for (std::size_t i = 0; i < nr; ++i) {
    for (std::size_t j = 0; j < nc; ++j) {
      c[i * nc + j] = cost[rows[i] * m + cols[j]];
      c_max = std::max(c_max, c[i * nc + j]);
    }
  }
  TransportPlan out;
  out.plan.assign(n * m, 0.0);
  // A singleton support forces the coupling.
  if (nr == 1 || nc == 1) {
    for (std::size_t i = 0; i < nr; ++i) {
      for (std::size_t j = 0; j < nc; ++j) {
        const double p = nc == 1 ? a[rows[i]] * (mass_b / mass_a) : b[cols[j]] * (mass_a / mass_b);
        out.plan[rows[i] * m + cols[j]] = p;
        out.cost += p * c[i * nc + j];
      }
    }
    out.marginal_error = std::abs(mass_a - mass_b);
    return out;
  }

  std::vector<double> log_a(nr), log_b(nc);
  for (std::size_t i = 0; i < nr; ++i) log_a[i] = std::log(a[rows[i]]);
  for (std::size_t j = 0; j < nc; ++j) log_b[j] = std::log(b[cols[j]]);

  std::vector<double> f(nr, 0.0), g(nc, 0.0), scratch(std::max(nr, nc));
  auto update_f = [&](double eps) {
    for (std::size_t i = 0; i < nr; ++i) {
      for (std::size_t j = 0; j < nc; ++j) scratch[j] = (g[j] - c[i * nc + j]) / eps;
      f[i] = eps * (log_a[i] - log_sum_exp(std::span<const double>(scratch).first(nc)));
    }
  };
  auto update_g = [&](double eps) {
    for (std::size_t j = 0; j < nc; ++j) {
      for (std::size_t i = 0; i < nr; ++i) scratch[i] = (f[i] - c[i * nc + j]) / eps;
      g[j] = eps * (log_b[j] - log_sum_exp(std::span<const double>(scratch).first(nr)));
    }
  };
  // After a g update the column marginals are exact; measure the rows.
  auto row_error = [&](double eps) {
    double err = 0.0;
    for (std::size_t i = 0; i < nr; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < nc; ++j) row += std::exp((f[i] + g[j] - c[i * nc + j]) / eps);
      err += std::abs(row - a[rows[i]]);
    }
    return err;
  };

  // Newton step on the dual potentials, damped until the row error drops.
  const std::size_t dim = nr + nc;
  std::vector<double> hess(dim * dim), step(dim), plan(nr * nc);
  auto newton_step = [&](double eps, double err) {
    std::fill(hess.begin(), hess.end(), 0.0);
    for (std::size_t i = 0; i < nr; ++i) {
      for (std::size_t j = 0; j < nc; ++j) plan[i * nc + j] = std::exp((f[i] + g[j] - c[i * nc + j]) / eps);
    }
    double diag_max = 0.0;
    for (std::size_t i = 0; i < nr; ++i) {
      double r = 0.0;
      for (std::size_t j = 0; j < nc; ++j) {
        r += plan[i * nc + j];
        hess[i * dim + nr + j] = plan[i * nc + j];
        hess[(nr + j) * dim + i] = plan[i * nc + j];
      }
      hess[i * dim + i] = r;
      step[i] = a[rows[i]] - r;
      diag_max = std::max(diag_max, r);
    }
    for (std::size_t j = 0; j < nc; ++j) {
      double col = 0.0;
      for (std::size_t i = 0; i < nr; ++i) col += plan[i * nc + j];
      hess[(nr + j) * dim + nr + j] = col;
      step[nr + j] = b[cols[j]] - col;
      diag_max = std::max(diag_max, col);
    }
    for (std::size_t k = 0; k < dim; ++k) hess[k * dim + k] += 1e-12 * diag_max;
    if (!cholesky_solve(hess, dim, step)) return false;

    const std::vector<double> f0 = f;
    const std::vector<double> g0 = g;
    double t = 1.0;
    for (int halving = 0; halving < 30; ++halving, t /= 2.0) {
      for (std::size_t i = 0; i < nr; ++i) f[i] = f0[i] + t * eps * step[i];
      for (std::size_t j = 0; j < nc; ++j) g[j] = g0[j] + t * eps * step[nr + j];
      update_g(eps);
      if (row_error(eps) < err) return true;
    }
    f = f0;
    g = g0;
    return false;
  };

  int iterations = 0;
  double err = std::numeric_limits<double>::infinity();
  double eps = std::max(epsilon, c_max);
  while (true) {
    const bool final_level = eps <= epsilon;
    const double tol = final_level ? options.tolerance : kCoarseTolerance;
    int sweeps = 0;
    while (iterations < options.max_iterations) {
      if (sweeps >= kSweepsPerLevel && newton_step(eps, err)) {
        err = row_error(eps);
      } else {
        update_f(eps);
        update_g(eps);
        err = row_error(eps);
        ++sweeps;
      }
      ++iterations;
      if (err <= tol) break;
    }
    if (err > tol) throw IterationLimitError(iterations, err);
    if (final_level) break;
    eps = std::max(epsilon, eps / 2.0);
  }

  out.iterations = iterations;
  out.marginal_error = err;
  for (std::size_t i = 0; i < nr; ++i) {
    for (std::size_t j = 0; j < nc; ++j) {
      const double p = std::exp((f[i] + g[j] - c[i * nc + j]) / epsilon);
      out.plan[rows[i] * m + cols[j]] = p;
      out.cost += p * c[i * nc + j];
    }
  }
  return out;
}

}  // namespace beamgrid
