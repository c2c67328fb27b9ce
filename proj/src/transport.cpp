#include "fedmpt/transport.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fedmpt/error.hpp"

namespace fedmpt {

namespace {

void require_unit_rows(const Tensor& t, const char* what) {
  for (std::size_t r = 0; r < t.rows(); ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < t.cols(); ++c) sq += t.at(r, c) * t.at(r, c);
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-6) {
      throw ContractError(std::string(what) + " row " + std::to_string(r) +
                          " is not unit norm");
    }
  }
}

std::string lambda_text(double lambda) {
  std::ostringstream os;
  os << lambda;
  return os.str();
}

}  // namespace

TransportProblem make_problem(Tensor cost, Tensor a, Tensor b, double lambda) {
  if (!(lambda > 0.0)) throw ParameterError("transport lambda must be positive");
  if (cost.rank() != 2 || a.size() != cost.rows() || b.size() != cost.cols()) {
    throw DimensionError("transport problem: cost " + shape_string(cost.shape()) +
                         " incompatible with marginals " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()));
  }
  TransportProblem p;
  p.similarity = Tensor(cost.shape());
  for (std::size_t i = 0; i < cost.size(); ++i) p.similarity[i] = 1.0 - cost[i];
  p.cost = std::move(cost);
  p.a = std::move(a);
  p.b = std::move(b);
  p.lambda = lambda;
  return p;
}

CostTerms build_cost(Var adapted_patches, Var cond_text, double tau, double lambda,
                     double logit_scale) {
  if (!(tau > 0.0)) throw ParameterError("transport temperature must be positive");
  if (!(lambda > 0.0)) throw ParameterError("transport lambda must be positive");
  const Tensor& patches = adapted_patches.value();
  const Tensor& text = cond_text.value();
  if (patches.rank() != 2 || text.rank() != 2 || patches.cols() != text.cols()) {
    throw DimensionError("build_cost: patches " + shape_string(patches.shape()) +
                         " and class text " + shape_string(text.shape()) +
                         " disagree on embedding size");
  }
  require_unit_rows(patches, "adapted patch");
  require_unit_rows(text, "class text");

  if (!(logit_scale > 0.0)) throw ParameterError("logit scale must be positive");
  Var raw = matmul(adapted_patches, transpose(cond_text));
  if (logit_scale != 1.0) raw = scale(raw, logit_scale);
  Var similarity = softmax(raw, 0, tau);

  const Tensor& s = similarity.value();
  const Tensor& r = raw.value();
  const std::size_t m_count = r.rows(), c_count = r.cols();

  Tensor peak({m_count});
  for (std::size_t m = 0; m < m_count; ++m) {
    peak[m] = *std::max_element(r.data().begin() + m * c_count,
                                r.data().begin() + (m + 1) * c_count);
  }
  Tensor cost(s.shape());
  for (std::size_t i = 0; i < s.size(); ++i) cost[i] = 1.0 - s[i];

  TransportProblem problem;
  problem.similarity = s;
  problem.cost = std::move(cost);
  problem.a = softmax(peak, 0, tau);
  problem.b = Tensor({c_count}, 1.0 / static_cast<double>(c_count));
  problem.lambda = lambda;
  problem.tau = tau;
  return CostTerms{similarity, std::move(problem)};
}

TransportProblem build_cost(const Tensor& adapted_patches, const Tensor& cond_text,
                            double tau, double lambda, double logit_scale) {
  Tape tape;
  return build_cost(tape.constant(adapted_patches), tape.constant(cond_text), tau, lambda,
                    logit_scale)
      .problem;
}

TransportPlan sinkhorn(const TransportProblem& problem, int max_iters, double tol) {
  if (max_iters < 1) throw ParameterError("sinkhorn max_iters must be at least 1");
  if (!(tol > 0.0)) throw ParameterError("sinkhorn tolerance must be positive");
  if (!(problem.lambda > 0.0)) throw ParameterError("sinkhorn lambda must be positive");
  const Tensor& cost = problem.cost;
  const std::size_t rows = cost.rows(), cols = cost.cols();

  TransportPlan out;
  out.kernel = Tensor(cost.shape());
  for (std::size_t i = 0; i < cost.size(); ++i) {
    out.kernel[i] = std::exp(-cost[i] / problem.lambda);
  }
  const Tensor& k = out.kernel;
  for (std::size_t m = 0; m < rows; ++m) {
    bool any = false;
    for (std::size_t c = 0; c < cols; ++c) any = any || k.at(m, c) > 0.0;
    if (!any) {
      throw NumericalError("sinkhorn kernel row " + std::to_string(m) +
                           " underflowed to zero at lambda=" + lambda_text(problem.lambda));
    }
  }
  for (std::size_t c = 0; c < cols; ++c) {
    bool any = false;
    for (std::size_t m = 0; m < rows; ++m) any = any || k.at(m, c) > 0.0;
    if (!any) {
      throw NumericalError("sinkhorn kernel column " + std::to_string(c) +
                           " underflowed to zero at lambda=" + lambda_text(problem.lambda));
    }
  }

  Tensor u({rows}, 1.0);
  Tensor v({cols}, 1.0);
  Tensor kv({rows});
  Tensor ktu({cols});
  for (int it = 1; it <= max_iters; ++it) {
    for (std::size_t m = 0; m < rows; ++m) {
      double acc = 0.0;
      for (std::size_t c = 0; c < cols; ++c) acc += k.at(m, c) * v[c];
      if (!(acc > 0.0)) {
        throw NumericalError("sinkhorn row scaling vanished at lambda=" +
                             lambda_text(problem.lambda));
      }
      u[m] = problem.a[m] / acc;
    }
    ktu.fill(0.0);
    for (std::size_t m = 0; m < rows; ++m) {
      for (std::size_t c = 0; c < cols; ++c) ktu[c] += k.at(m, c) * u[m];
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (!(ktu[c] > 0.0)) {
        throw NumericalError("sinkhorn column scaling vanished at lambda=" +
                             lambda_text(problem.lambda));
      }
      v[c] = problem.b[c] / ktu[c];
    }
    if (!u.all_finite() || !v.all_finite()) {
      throw NumericalError("sinkhorn scaling overflowed at lambda=" +
                           lambda_text(problem.lambda));
    }

    double err = 0.0;
    for (std::size_t m = 0; m < rows; ++m) {
      double acc = 0.0;
      for (std::size_t c = 0; c < cols; ++c) acc += k.at(m, c) * v[c];
      err = std::max(err, std::abs(u[m] * acc - problem.a[m]));
    }
    for (std::size_t c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (std::size_t m = 0; m < rows; ++m) acc += k.at(m, c) * u[m];
      err = std::max(err, std::abs(v[c] * acc - problem.b[c]));
    }
    out.iterations_used = it;
    if (err < tol) {
      out.converged = true;
      break;
    }
  }

  out.plan = Tensor(cost.shape());
  for (std::size_t m = 0; m < rows; ++m) {
    for (std::size_t c = 0; c < cols; ++c) out.plan.at(m, c) = u[m] * k.at(m, c) * v[c];
  }
  out.u = std::move(u);
  out.v = std::move(v);
  return out;
}

Var conditioned_prediction(const TransportPlan& plan, Var similarity) {
  if (plan.plan.shape() != similarity.value().shape()) {
    throw DimensionError("plan " + shape_string(plan.plan.shape()) +
                         " does not match similarity " +
                         shape_string(similarity.value().shape()));
  }
  Var weighted = mul(similarity.tape->constant(plan.plan), similarity);
  return sum_axis(weighted, 0);
}

Tensor conditioned_prediction(const TransportPlan& plan, const TransportProblem& problem) {
  Tape tape;
  return conditioned_prediction(plan, tape.constant(problem.similarity)).value();
}

std::size_t PlanRecorder::size() const { return plans_.size(); }

void PlanRecorder::push(const TransportPlan& plan) {
  plans_.push_back(std::make_shared<const TransportPlan>(plan));
}

const TransportPlan& PlanRecorder::next() {
  if (cursor_ >= plans_.size()) {
    throw ContractError("plan replay ran past the " + std::to_string(plans_.size()) +
                        " recorded plans");
  }
  return *plans_[cursor_++];
}

Var predict_all_conditions(Tape& tape, Var patches, std::span<ConditionAdapter> adapters,
                           Var text, const TransportSettings& settings) {
  const Tensor& t = text.value();
  if (t.rank() != 3 || t.dim(0) != adapters.size()) {
    throw DimensionError("predict_all_conditions: text embedding " +
                         shape_string(t.shape()) + " does not match " +
                         std::to_string(adapters.size()) + " adapters");
  }
  const std::size_t classes = t.dim(1);
  std::vector<Var> rows;
  rows.reserve(adapters.size());
  for (std::size_t n = 0; n < adapters.size(); ++n) {
    Var adapted = adapters[n].adapt(tape, patches);
    Var cond_text = slice_rows(text, n * classes, classes);
    CostTerms terms = build_cost(adapted, cond_text, settings.tau, settings.lambda,
                                  settings.logit_scale);
    PlanRecorder* rec = settings.recorder;
    if (rec != nullptr && rec->mode() == PlanRecorder::Mode::kReplay) {
      rows.push_back(conditioned_prediction(rec->next(), terms.similarity));
      continue;
    }
    const TransportPlan plan = sinkhorn(terms.problem, settings.max_iters, settings.tol);
    if (rec != nullptr) rec->push(plan);
    rows.push_back(conditioned_prediction(plan, terms.similarity));
  }
  return concat_rows(rows);
}

}  // namespace fedmpt
