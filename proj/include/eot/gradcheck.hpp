#pragma once

#include <functional>
#include <string>
#include <vector>

#include "eot/module.hpp"
#include "eot/tensor.hpp"

namespace eot {

// One tensor whose gradient is under test. `grad` is where the analytic
// backward pass deposits dProbe/dValue.
struct GradTarget {
  std::string name;
  Tensor<double>* value = nullptr;
  Tensor<double>* grad = nullptr;
};

inline std::vector<GradTarget> grad_targets(const std::vector<Parameter<double>*>& params) {
  std::vector<GradTarget> out;
  out.reserve(params.size());
  for (Parameter<double>* p : params) out.push_back({p->name, &p->value, &p->grad});
  return out;
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_target;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

// Central finite differences against an analytic backward pass.
//
// `analytic_pass` must zero all target grads, run forward+backward and leave
// dProbe/dTarget in each target's grad tensor. `probe` must run the forward
// path only and return the scalar. Relative error uses |a - n| / max(|a|,
// |n|) with near-zero pairs treated as exact.
template <typename Backward, typename Probe>
GradCheckReport check_gradients(const std::vector<GradTarget>& targets,
                                const Backward& analytic_pass, const Probe& probe,
                                double epsilon) {
  analytic_pass();
  std::vector<Tensor<double>> analytic;
  analytic.reserve(targets.size());
  for (const GradTarget& t : targets) analytic.push_back(*t.grad);

  GradCheckReport report;
  for (std::size_t ti = 0; ti < targets.size(); ++ti) {
    Tensor<double>& value = *targets[ti].value;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + epsilon;
      const double up = probe();
      value[i] = saved - epsilon;
      const double down = probe();
      value[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[ti][i];
      const double mag = std::max(std::abs(a), std::abs(numeric));
      const double rel = mag < 1e-7 ? 0.0 : std::abs(a - numeric) / mag;
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_target = targets[ti].name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace eot
