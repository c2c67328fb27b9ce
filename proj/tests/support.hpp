#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "fedmpt/autodiff.hpp"
#include "fedmpt/transport.hpp"
#include "oracles.hpp"

namespace testing {

inline fedmpt::Tensor random_tensor(std::mt19937_64& gen, fedmpt::Shape shape,
                                    double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  fedmpt::Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(gen);
  return t;
}

// Central difference of a scalar function of one parameter entry.
inline double central_difference(fedmpt::Parameter& p, std::size_t k,
                                 const std::function<double()>& f, double h = 1e-6) {
  const double saved = p.value[k];
  p.value[k] = saved + h;
  const double up = f();
  p.value[k] = saved - h;
  const double down = f();
  p.value[k] = saved;
  return (up - down) / (2.0 * h);
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max(1e-8, std::max(std::abs(a), std::abs(b)));
}

// Largest relative error between tape gradients and central differences over
// every entry of every parameter. `build` records the scalar loss on `tape`.
inline double max_grad_error(std::vector<fedmpt::Parameter*> params,
                             const std::function<fedmpt::Var(fedmpt::Tape&)>& build,
                             double h = 1e-6) {
  for (auto* p : params) p->zero_grad();
  {
    fedmpt::Tape tape;
    tape.backward(build(tape));
  }
  auto eval = [&] {
    fedmpt::Tape tape;
    return build(tape).value()[0];
  };
  double worst = 0.0;
  for (auto* p : params) {
    for (std::size_t k = 0; k < p->value.size(); ++k) {
      const double fd = central_difference(*p, k, eval, h);
      worst = std::max(worst, relative_error(p->grad[k], fd));
    }
  }
  return worst;
}

inline fedmpt::Tensor random_simplex(std::mt19937_64& gen, std::size_t n) {
  fedmpt::Tensor t = random_tensor(gen, {n}, 0.1, 1.0);
  double s = 0.0;
  for (double v : t.data()) s += v;
  for (auto& v : t.data()) v /= s;
  return t;
}

inline oracle::Matrix to_matrix(const fedmpt::Tensor& t) {
  oracle::Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  }
  return m;
}

// Largest absolute deviation of the plan's row and column sums from a and b.
inline double marginal_error(const fedmpt::TransportPlan& plan,
                             const fedmpt::TransportProblem& prob) {
  double err = 0.0;
  for (std::size_t i = 0; i < plan.plan.rows(); ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < plan.plan.cols(); ++j) r += plan.plan.at(i, j);
    err = std::max(err, std::abs(r - prob.a[i]));
  }
  for (std::size_t j = 0; j < plan.plan.cols(); ++j) {
    double c = 0.0;
    for (std::size_t i = 0; i < plan.plan.rows(); ++i) c += plan.plan.at(i, j);
    err = std::max(err, std::abs(c - prob.b[j]));
  }
  return err;
}

}  // namespace testing
