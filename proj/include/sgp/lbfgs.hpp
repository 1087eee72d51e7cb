#pragma once

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <vector>

namespace sgp::lbfgs {

using Eigen::VectorXd;

struct Options {
  int max_iterations = 1000;
  double gradient_tolerance = 1e-6;   // on the 2-norm of the gradient
  double objective_tolerance = 1e-9;  // relative decrease per accepted step
  int memory = 10;
  int max_line_search_evals = 40;
  double armijo_c1 = 1e-4;
  double wolfe_c2 = 0.9;
};

enum class Status { CONVERGED, MAX_ITERATIONS, LINE_SEARCH_FAILURE };

struct Result {
  VectorXd x;
  double fx = std::numeric_limits<double>::infinity();
  VectorXd grad;
  Status status = Status::MAX_ITERATIONS;
  int iterations = 0;
};

/// Limited-memory quasi-Newton descent with a strong-Wolfe line search.
/// `objective(x, grad_out)` returns the value; non-finite values are treated
/// as out-of-domain and rejected by the line search, so accepted steps are
/// strictly monotone. `on_accept(iter, x, fx, grad)` fires per accepted step.
template <class Objective, class OnAccept>
Result minimize(Objective&& objective, VectorXd x0, const Options& opt,
                OnAccept&& on_accept) {
  const Eigen::Index n = x0.size();
  Result res;
  res.x = std::move(x0);
  res.grad.resize(n);
  res.fx = objective(res.x, res.grad);

  if (res.grad.norm() <= opt.gradient_tolerance) {
    res.status = Status::CONVERGED;
    return res;
  }

  std::vector<VectorXd> s_mem, y_mem;
  std::vector<double> rho_mem;
  VectorXd q(n), direction(n), x_trial(n), g_trial(n);

  // Strong-Wolfe search along `direction` from the current iterate. Returns
  // true and fills the trial state on success; falls back to the best
  // Armijo-satisfying point seen if the Wolfe pair is unreachable.
  auto line_search = [&](double alpha0, double phi0, double dphi0,
                         double& alpha_out, double& phi_out) -> bool {
    const double c1 = opt.armijo_c1, c2 = opt.wolfe_c2;
    double best_alpha = 0.0, best_phi = phi0;
    VectorXd best_x, best_g;
    auto remember = [&](double a, double phi, const VectorXd& x, const VectorXd& g) {
      if (phi < best_phi) {
        best_alpha = a;
        best_phi = phi;
        best_x = x;
        best_g = g;
      }
    };
    auto finish_best = [&]() -> bool {
      if (best_alpha <= 0.0) return false;
      alpha_out = best_alpha;
      phi_out = best_phi;
      x_trial = best_x;
      g_trial = best_g;
      return true;
    };

    int evals = 0;
    auto eval = [&](double a) -> double {
      ++evals;
      x_trial = res.x + a * direction;
      return objective(x_trial, g_trial);
    };

    double lo = 0.0, phi_lo = phi0, dphi_lo = dphi0;
    double hi = std::numeric_limits<double>::quiet_NaN(), phi_hi = 0.0;
    bool bracketed = false;

    double a = alpha0, a_prev = 0.0, phi_prev = phi0;
    while (evals < opt.max_line_search_evals && !bracketed) {
      const double phi_a = eval(a);
      const bool ok = std::isfinite(phi_a);
      if (!ok || phi_a > phi0 + c1 * a * dphi0 || (a_prev > 0.0 && phi_a >= phi_prev)) {
        lo = a_prev;
        phi_lo = phi_prev;
        hi = a;
        phi_hi = ok ? phi_a : std::numeric_limits<double>::infinity();
        bracketed = true;
        break;
      }
      const double dphi_a = g_trial.dot(direction);
      remember(a, phi_a, x_trial, g_trial);
      if (std::abs(dphi_a) <= -c2 * dphi0) {
        alpha_out = a;
        phi_out = phi_a;
        return true;
      }
      if (dphi_a >= 0.0) {
        lo = a;
        phi_lo = phi_a;
        dphi_lo = dphi_a;
        hi = a_prev;
        phi_hi = phi_prev;
        bracketed = true;
        break;
      }
      a_prev = a;
      phi_prev = phi_a;
      a *= 2.0;
      if (a > 1e12) break;
    }
    if (!bracketed) return finish_best();

    while (evals < opt.max_line_search_evals) {
      if (std::abs(hi - lo) <= 1e-16 * std::max(1.0, std::abs(lo))) break;
      a = 0.5 * (lo + hi);
      const double phi_a = eval(a);
      const bool ok = std::isfinite(phi_a);
      if (!ok || phi_a > phi0 + c1 * a * dphi0 || phi_a >= phi_lo) {
        hi = a;
        phi_hi = ok ? phi_a : std::numeric_limits<double>::infinity();
        continue;
      }
      const double dphi_a = g_trial.dot(direction);
      remember(a, phi_a, x_trial, g_trial);
      if (std::abs(dphi_a) <= -c2 * dphi0) {
        alpha_out = a;
        phi_out = phi_a;
        return true;
      }
      if (dphi_a * (hi - lo) >= 0.0) {
        hi = lo;
        phi_hi = phi_lo;
      }
      lo = a;
      phi_lo = phi_a;
      dphi_lo = dphi_a;
    }
    (void)phi_hi;
    (void)dphi_lo;
    return finish_best();
  };

  for (res.iterations = 0; res.iterations < opt.max_iterations;) {
    // Two-loop recursion over the stored curvature pairs.
    q = res.grad;
    const int k = static_cast<int>(s_mem.size());
    std::vector<double> a_coef(k);
    for (int i = k - 1; i >= 0; --i) {
      a_coef[i] = rho_mem[i] * s_mem[i].dot(q);
      q -= a_coef[i] * y_mem[i];
    }
    double gamma = 1.0;
    if (k > 0) gamma = s_mem[k - 1].dot(y_mem[k - 1]) / y_mem[k - 1].squaredNorm();
    q *= gamma;
    for (int i = 0; i < k; ++i) {
      const double b = rho_mem[i] * y_mem[i].dot(q);
      q += (a_coef[i] - b) * s_mem[i];
    }
    direction = -q;

    double dphi0 = res.grad.dot(direction);
    if (!(dphi0 < 0.0)) {  // not a descent direction: reset to steepest descent
      s_mem.clear();
      y_mem.clear();
      rho_mem.clear();
      direction = -res.grad;
      dphi0 = res.grad.dot(direction);
    }

    const double alpha0 =
        s_mem.empty() ? 1.0 / std::max(1.0, res.grad.norm()) : 1.0;
    double alpha = 0.0, fx_new = 0.0;
    if (!line_search(alpha0, res.fx, dphi0, alpha, fx_new)) {
      res.status = Status::LINE_SEARCH_FAILURE;
      return res;
    }

    const VectorXd step = x_trial - res.x;
    const VectorXd dgrad = g_trial - res.grad;
    const double prev_fx = res.fx;
    res.x = x_trial;
    res.fx = fx_new;
    res.grad = g_trial;
    ++res.iterations;
    on_accept(res.iterations, res.x, res.fx, res.grad);

    if (res.grad.norm() <= opt.gradient_tolerance ||
        std::abs(prev_fx - res.fx) <=
            opt.objective_tolerance * std::max(1.0, std::abs(res.fx))) {
      res.status = Status::CONVERGED;
      return res;
    }

    const double sy = step.dot(dgrad);
    if (sy > 1e-10 * step.norm() * dgrad.norm()) {
      s_mem.push_back(step);
      y_mem.push_back(dgrad);
      rho_mem.push_back(1.0 / sy);
      if (static_cast<int>(s_mem.size()) > opt.memory) {
        s_mem.erase(s_mem.begin());
        y_mem.erase(y_mem.begin());
        rho_mem.erase(rho_mem.begin());
      }
    }
  }
  res.status = Status::MAX_ITERATIONS;
  return res;
}

}  // namespace sgp::lbfgs
