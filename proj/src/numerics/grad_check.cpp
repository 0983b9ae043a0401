#include "patmod/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace patmod::num {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

void note(GradCheckResult& result, double analytic, double numeric, std::size_t index,
          double floor) {
  ++result.checked;
  if (!std::isfinite(analytic) || !std::isfinite(numeric)) {
    result.finite = false;
    result.worst_index = index;
    return;
  }
  const double err = relative_error(analytic, numeric, floor);
  if (err > result.max_rel_error) {
    result.max_rel_error = err;
    result.worst_index = index;
  }
}

}  // namespace

GradCheckResult grad_check(const TapeFunction& f, const Tensor& x, double eps, double floor) {
  Tensor analytic;
  {
    Tape tape;
    Var input = tape.leaf(x);
    Var y = f(tape, input);
    tape.backward(y);
    analytic = tape.grad(input);
  }
  auto eval = [&](const Tensor& at) {
    Tape tape(false);
    return f(tape, tape.constant(at)).value().item();
  };
  GradCheckResult result;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double up = eval(probe);
    probe[i] = x[i] - eps;
    const double down = eval(probe);
    probe[i] = x[i];
    note(result, analytic[i], (up - down) / (2.0 * eps), i, floor);
  }
  return result;
}

GradCheckResult grad_check_parameters(ParameterSet& params, const LossBuilder& loss, double eps,
                                      double floor, std::vector<std::size_t> indices) {
  GradientList grads;
  {
    Tape tape;
    Var y = loss(tape);
    grads = tape.backward(y);
  }
  if (indices.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].trainable) indices.push_back(i);
    }
  }
  auto eval = [&]() {
    Tape tape(false);
    return loss(tape).value().item();
  };
  GradCheckResult result;
  std::size_t flat = 0;
  for (std::size_t p : indices) {
    Tensor& value = params[p].value;
    for (std::size_t i = 0; i < value.size(); ++i, ++flat) {
      const double saved = value[i];
      value[i] = saved + eps;
      const double up = eval();
      value[i] = saved - eps;
      const double down = eval();
      value[i] = saved;
      note(result, grads[p].empty() ? 0.0 : grads[p][i], (up - down) / (2.0 * eps), flat, floor);
    }
  }
  return result;
}

}  // namespace patmod::num
