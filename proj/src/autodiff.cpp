#include "fedmpt/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedmpt/error.hpp"

namespace fedmpt {

Parameter::Parameter(std::string id_, Tensor value_)
    : id(std::move(id_)), value(std::move(value_)), grad(value.shape(), 0.0) {}

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(Parameter& param) {
  nodes_.push_back(Node{param.value, {}, true, &param, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backprop backprop) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (in.tape != this) throw ContractError("op inputs recorded on a different tape");
    needs = needs || nodes_[in.id].requires_grad;
  }
  if (!value.all_finite()) {
    throw NumericalError("non-finite value produced by op with output shape " +
                         shape_string(value.shape()));
  }
  nodes_.push_back(Node{std::move(value), {}, needs, nullptr,
                        needs ? std::move(backprop) : Backprop{}});
  return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& node = nodes_[id];
  if (node.grad.shape() != node.value.shape()) node.grad = Tensor(node.value.shape(), 0.0);
  return node.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw ContractError("backward: loss belongs to another tape");
  if (value(loss).size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_string(value(loss).shape()));
  }
  if (!nodes_[loss.id].requires_grad) return;
  grad_buffer(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || node.grad.shape() != node.value.shape()) continue;
    if (node.backprop) node.backprop(*this, node.grad);
    if (node.param) {
      Tensor& target = node.param->grad;
      for (std::size_t k = 0; k < target.size(); ++k) target[k] += node.grad[k];
    }
  }
}

namespace {

bool is_scalar(const Tensor& t) { return t.size() == 1; }

Shape broadcast_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return a.shape();
  if (is_scalar(b)) return a.shape();
  if (is_scalar(a)) return b.shape();
  throw DimensionError(std::string(op) + ": incompatible shapes " +
                       shape_string(a.shape()) + " and " + shape_string(b.shape()));
}

// Adds `g` into the gradient of `in`, summing when `in` was broadcast.
void push_grad(Tape& tape, Var in, const Tensor& g) {
  if (!tape.requires_grad(in)) return;
  Tensor& dst = tape.grad_buffer(in.id);
  if (dst.size() == g.size()) {
    for (std::size_t k = 0; k < g.size(); ++k) dst[k] += g[k];
  } else {
    double total = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) total += g[k];
    dst[0] += total;
  }
}

template <typename F>
Var elementwise(Var a, F&& f, std::function<double(double x, double y)> dydx) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const Var inputs[] = {a};
  const std::size_t out_id = a.tape->size();
  return a.tape->record(std::move(y), inputs,
                        [a, out_id, dydx](Tape& tape, const Tensor& g) {
                          const Tensor& x = tape.value(a);
                          const Tensor& y = tape.value(Var{&tape, out_id});
                          Tensor& dx = tape.grad_buffer(a.id);
                          for (std::size_t i = 0; i < x.size(); ++i) {
                            dx[i] += g[i] * dydx(x[i], y[i]);
                          }
                        });
}

struct AxisView {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
  Shape reduced;
};

AxisView axis_view(const Tensor& t, std::size_t axis) {
  if (axis >= t.rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(t.shape()));
  }
  AxisView v;
  for (std::size_t d = 0; d < t.rank(); ++d) {
    if (d < axis) v.outer *= t.shape()[d];
    if (d > axis) v.inner *= t.shape()[d];
    if (d != axis) v.reduced.push_back(t.shape()[d]);
  }
  v.len = t.shape()[axis];
  if (v.reduced.empty()) v.reduced.push_back(1);
  return v;
}

void require_matrix(const char* op, const Tensor& t) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got shape " +
                         shape_string(t.shape()));
  }
}

}  // namespace

Var add(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor out(broadcast_shape("add", x, y));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = x[is_scalar(x) ? 0 : i] + y[is_scalar(y) ? 0 : i];
  }
  const Var inputs[] = {a, b};
  return a.tape->record(std::move(out), inputs, [a, b](Tape& tape, const Tensor& g) {
    push_grad(tape, a, g);
    push_grad(tape, b, g);
  });
}

Var sub(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor out(broadcast_shape("sub", x, y));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = x[is_scalar(x) ? 0 : i] - y[is_scalar(y) ? 0 : i];
  }
  const Var inputs[] = {a, b};
  return a.tape->record(std::move(out), inputs, [a, b](Tape& tape, const Tensor& g) {
    push_grad(tape, a, g);
    if (tape.requires_grad(b)) {
      Tensor neg = g;
      for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -neg[i];
      push_grad(tape, b, neg);
    }
  });
}

Var mul(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor out(broadcast_shape("mul", x, y));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = x[is_scalar(x) ? 0 : i] * y[is_scalar(y) ? 0 : i];
  }
  const Var inputs[] = {a, b};
  return a.tape->record(std::move(out), inputs, [a, b](Tape& tape, const Tensor& g) {
    const Tensor& x = tape.value(a);
    const Tensor& y = tape.value(b);
    if (tape.requires_grad(a)) {
      Tensor ga(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * y[is_scalar(y) ? 0 : i];
      push_grad(tape, a, ga);
    }
    if (tape.requires_grad(b)) {
      Tensor gb(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * x[is_scalar(x) ? 0 : i];
      push_grad(tape, b, gb);
    }
  });
}

Var scale(Var a, double factor) {
  return elementwise(
      a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double offset) {
  return elementwise(
      a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Var exp(Var a) {
  return elementwise(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  for (double x : a.value().data()) {
    if (!(x > 0.0)) throw ContractError("log of non-positive value " + std::to_string(x));
  }
  return elementwise(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var pow(Var a, double exponent) {
  const bool integral = exponent == std::floor(exponent);
  for (double x : a.value().data()) {
    if (x < 0.0 && !integral) {
      throw ContractError("pow: negative base with fractional exponent");
    }
  }
  return elementwise(
      a, [exponent](double x) { return std::pow(x, exponent); },
      [exponent](double x, double) {
        if (exponent == 0.0) return 0.0;
        if (x == 0.0) return exponent == 1.0 ? 1.0 : 0.0;
        return exponent * std::pow(x, exponent - 1.0);
      });
}

Var sigmoid(Var a) {
  return elementwise(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var clamp_min(Var a, double floor) {
  return elementwise(
      a, [floor](double x) { return std::max(x, floor); },
      [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

Var log1m(Var a, double floor) {
  if (!(floor > 0.0)) throw ParameterError("log1m floor must be positive");
  return elementwise(
      a, [floor](double x) { return 1.0 - x > floor ? std::log1p(-x) : std::log(floor); },
      [floor](double x, double) { return 1.0 - x > floor ? -1.0 / (1.0 - x) : 0.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree for " +
                         shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  const std::size_t p = a.rows(), q = a.cols(), r = b.cols();
  Tensor out({p, r});
  for (std::size_t i = 0; i < p; ++i) {
    double* row = out.data().data() + i * r;
    for (std::size_t k = 0; k < q; ++k) {
      const double aik = a.data()[i * q + k];
      if (aik == 0.0) continue;
      const double* brow = b.data().data() + k * r;
      for (std::size_t j = 0; j < r; ++j) row[j] += aik * brow[j];
    }
  }
  return out;
}

Var matmul(Var a, Var b) {
  Tensor out = matmul(a.value(), b.value());
  const Var inputs[] = {a, b};
  return a.tape->record(std::move(out), inputs, [a, b](Tape& tape, const Tensor& g) {
    const Tensor& x = tape.value(a);
    const Tensor& y = tape.value(b);
    const std::size_t p = x.rows(), q = x.cols(), r = y.cols();
    const double* xp = x.data().data();
    const double* yp = y.data().data();
    const double* gp = g.data().data();
    if (tape.requires_grad(a)) {
      // dA = G * B^T
      double* dp = tape.grad_buffer(a.id).data().data();
      for (std::size_t i = 0; i < p; ++i) {
        const double* gi = gp + i * r;
        for (std::size_t k = 0; k < q; ++k) {
          const double* yk = yp + k * r;
          double acc = 0.0;
          for (std::size_t j = 0; j < r; ++j) acc += gi[j] * yk[j];
          dp[i * q + k] += acc;
        }
      }
    }
    if (tape.requires_grad(b)) {
      // dB = A^T * G
      double* dp = tape.grad_buffer(b.id).data().data();
      for (std::size_t i = 0; i < p; ++i) {
        const double* gi = gp + i * r;
        for (std::size_t k = 0; k < q; ++k) {
          const double aik = xp[i * q + k];
          if (aik == 0.0) continue;
          double* dk = dp + k * r;
          for (std::size_t j = 0; j < r; ++j) dk[j] += aik * gi[j];
        }
      }
    }
  });
}

Var transpose(Var a) {
  const Tensor& x = a.value();
  require_matrix("transpose", x);
  Tensor out({x.cols(), x.rows()});
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) out.at(j, i) = x.at(i, j);
  }
  const Var inputs[] = {a};
  return a.tape->record(std::move(out), inputs, [a](Tape& tape, const Tensor& g) {
    Tensor& dx = tape.grad_buffer(a.id);
    for (std::size_t i = 0; i < dx.rows(); ++i) {
      for (std::size_t j = 0; j < dx.cols(); ++j) dx.at(i, j) += g.at(j, i);
    }
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const Var inputs[] = {a};
  return a.tape->record(std::move(out), inputs, [a](Tape& tape, const Tensor& g) {
    Tensor& dx = tape.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
  });
}

Var sum_axis(Var a, std::size_t axis) {
  const Tensor& x = a.value();
  const AxisView v = axis_view(x, axis);
  Tensor out(v.reduced);
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t l = 0; l < v.len; ++l) {
      for (std::size_t i = 0; i < v.inner; ++i) {
        out[o * v.inner + i] += x[(o * v.len + l) * v.inner + i];
      }
    }
  }
  const Var inputs[] = {a};
  return a.tape->record(std::move(out), inputs, [a, v](Tape& tape, const Tensor& g) {
    Tensor& dx = tape.grad_buffer(a.id);
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t l = 0; l < v.len; ++l) {
        for (std::size_t i = 0; i < v.inner; ++i) {
          dx[(o * v.len + l) * v.inner + i] += g[o * v.inner + i];
        }
      }
    }
  });
}

Var mean_axis(Var a, std::size_t axis) {
  const std::size_t len = a.value().dim(axis);
  if (len == 0) throw DimensionError("mean over an empty axis");
  return scale(sum_axis(a, axis), 1.0 / static_cast<double>(len));
}

Var max_axis(Var a, std::size_t axis) {
  const Tensor& x = a.value();
  const AxisView v = axis_view(x, axis);
  if (v.len == 0) throw DimensionError("max over an empty axis");
  Tensor out(v.reduced);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      std::size_t best = o * v.len * v.inner + i;
      for (std::size_t l = 1; l < v.len; ++l) {
        const std::size_t k = (o * v.len + l) * v.inner + i;
        if (x[k] > x[best]) best = k;
      }
      out[o * v.inner + i] = x[best];
      argmax[o * v.inner + i] = best;
    }
  }
  const Var inputs[] = {a};
  return a.tape->record(std::move(out), inputs,
                        [a, argmax = std::move(argmax)](Tape& tape, const Tensor& g) {
                          Tensor& dx = tape.grad_buffer(a.id);
                          for (std::size_t k = 0; k < argmax.size(); ++k) {
                            dx[argmax[k]] += g[k];
                          }
                        });
}

Var sum_all(Var a) {
  double total = 0.0;
  for (double x : a.value().data()) total += x;
  const Var inputs[] = {a};
  return a.tape->record(Tensor::scalar(total), inputs, [a](Tape& tape, const Tensor& g) {
    Tensor& dx = tape.grad_buffer(a.id);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[0];
  });
}

Tensor softmax(const Tensor& x, std::size_t axis, double temperature) {
  if (!(temperature > 0.0)) {
    throw ParameterError("softmax temperature must be positive, got " +
                         std::to_string(temperature));
  }
  const AxisView v = axis_view(x, axis);
  Tensor out(x.shape());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      auto idx = [&](std::size_t l) { return (o * v.len + l) * v.inner + i; };
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < v.len; ++l) peak = std::max(peak, x[idx(l)]);
      double total = 0.0;
      for (std::size_t l = 0; l < v.len; ++l) {
        out[idx(l)] = std::exp((x[idx(l)] - peak) / temperature);
        total += out[idx(l)];
      }
      for (std::size_t l = 0; l < v.len; ++l) out[idx(l)] /= total;
    }
  }
  return out;
}

Var softmax(Var a, std::size_t axis, double temperature) {
  Tensor out = softmax(a.value(), axis, temperature);
  const AxisView v = axis_view(a.value(), axis);
  const std::size_t out_id = a.tape->size();
  const Var inputs[] = {a};
  return a.tape->record(
      std::move(out), inputs, [a, v, out_id, temperature](Tape& tape, const Tensor& g) {
        const Tensor& y = tape.value(Var{&tape, out_id});
        Tensor& dx = tape.grad_buffer(a.id);
        for (std::size_t o = 0; o < v.outer; ++o) {
          for (std::size_t i = 0; i < v.inner; ++i) {
            auto idx = [&](std::size_t l) { return (o * v.len + l) * v.inner + i; };
            double dot = 0.0;
            for (std::size_t l = 0; l < v.len; ++l) dot += g[idx(l)] * y[idx(l)];
            for (std::size_t l = 0; l < v.len; ++l) {
              dx[idx(l)] += y[idx(l)] * (g[idx(l)] - dot) / temperature;
            }
          }
        }
      });
}

Tensor l2_normalize_rows(const Tensor& x) {
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor out(x.shape());
  const double uniform = cols ? 1.0 / std::sqrt(static_cast<double>(cols)) : 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sq += x[r * cols + c] * x[r * cols + c];
    const double norm = std::sqrt(sq);
    for (std::size_t c = 0; c < cols; ++c) {
      out[r * cols + c] = norm > 0.0 ? x[r * cols + c] / norm : uniform;
    }
  }
  return out;
}

Var l2_normalize_rows(Var a) {
  Tensor out = l2_normalize_rows(a.value());
  const std::size_t out_id = a.tape->size();
  const Var inputs[] = {a};
  return a.tape->record(std::move(out), inputs, [a, out_id](Tape& tape, const Tensor& g) {
    const Tensor& x = tape.value(a);
    const Tensor& y = tape.value(Var{&tape, out_id});
    Tensor& dx = tape.grad_buffer(a.id);
    const std::size_t rows = x.rows(), cols = x.cols();
    for (std::size_t r = 0; r < rows; ++r) {
      double sq = 0.0;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        sq += x[r * cols + c] * x[r * cols + c];
        dot += g[r * cols + c] * y[r * cols + c];
      }
      if (!(sq > 0.0)) continue;
      const double norm = std::sqrt(sq);
      for (std::size_t c = 0; c < cols; ++c) {
        dx[r * cols + c] += (g[r * cols + c] - y[r * cols + c] * dot) / norm;
      }
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows needs at least one input");
  const std::size_t cols = parts.front().value().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.value().cols() != cols) {
      throw DimensionError("concat_rows: column mismatch " +
                           shape_string(parts.front().shape()) + " vs " +
                           shape_string(p.shape()));
    }
    rows += p.value().rows();
  }
  std::vector<double> values;
  values.reserve(rows * cols);
  for (const Var& p : parts) {
    const auto d = p.value().data();
    values.insert(values.end(), d.begin(), d.end());
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  Tensor out({rows, cols}, std::move(values));
  return parts.front().tape->record(
      std::move(out), inputs, [inputs](Tape& tape, const Tensor& g) {
        std::size_t offset = 0;
        for (const Var& p : inputs) {
          const std::size_t n = tape.value(p).size();
          if (tape.requires_grad(p)) {
            Tensor& dp = tape.grad_buffer(p.id);
            for (std::size_t k = 0; k < n; ++k) dp[k] += g[offset + k];
          }
          offset += n;
        }
      });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& x = a.value();
  const std::size_t cols = x.cols();
  if (begin + count > x.rows()) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for shape " +
                         shape_string(x.shape()));
  }
  std::vector<double> values(x.data().begin() + begin * cols,
                             x.data().begin() + (begin + count) * cols);
  Tensor out({count, cols}, std::move(values));
  const Var inputs[] = {a};
  return a.tape->record(std::move(out), inputs,
                        [a, begin, cols](Tape& tape, const Tensor& g) {
                          Tensor& dx = tape.grad_buffer(a.id);
                          for (std::size_t k = 0; k < g.size(); ++k) {
                            dx[begin * cols + k] += g[k];
                          }
                        });
}

void sgd_step(std::span<Parameter* const> params, double lr) {
  if (!(lr > 0.0)) throw ParameterError("learning rate must be positive");
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] -= lr * p->grad[i];
    p->zero_grad();
  }
}

}  // namespace fedmpt
