#pragma once

// Shared test utilities: the finite-difference gradient oracle and small
// helpers. The oracle recomputes losses by forward evaluation only and never
// touches the tape, so it stays independent of the backward implementation
// it checks.

#include <unistd.h>

#include <filesystem>
#include <functional>
#include <string>

#include "signvid/nn.hpp"
#include "signvid/tensor.hpp"

namespace testsup {

using signvid::Rng;
using signvid::Tape;
using signvid::Tensor;

/// Central finite difference of eval() w.r.t. element i of x.
inline double numeric_grad(const std::function<double()>& eval, Tensor& x, std::size_t i,
                           double h = 1e-5) {
  auto& data = x.mutable_data();
  const double keep = data[i];
  data[i] = keep + h;
  const double fp = eval();
  data[i] = keep - h;
  const double fm = eval();
  data[i] = keep;
  return (fp - fm) / (2.0 * h);
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t points = 0;
};

/// Backprop through build_loss once, then compare the analytic gradient of each
/// listed input against central differences at `points` random elements.
/// Relative error uses |a - n| / max(|a| + |n|, 1e-8).
inline GradCheckResult check_gradients(const std::function<Tensor()>& build_loss,
                                       std::vector<Tensor> inputs, int points, Rng& rng,
                                       double h = 1e-5) {
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tensor loss = build_loss();
    tape.backward(loss);
    for (Tensor& in : inputs) {
      analytic.push_back(in.grad());
      in.zero_grad();
    }
  }
  auto eval = [&]() { return build_loss().item(); };
  GradCheckResult res;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    Tensor& in = inputs[t];
    for (int p = 0; p < points; ++p) {
      const std::size_t i = static_cast<std::size_t>(rng.uniform_index(in.size()));
      const double n = numeric_grad(eval, in, i, h);
      const double a = analytic[t][i];
      const double rel = std::abs(a - n) / std::max(std::abs(a) + std::abs(n), 1e-8);
      res.max_rel_err = std::max(res.max_rel_err, rel);
      ++res.points;
    }
  }
  return res;
}

/// Fresh unique directory under the system temp root.
inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::uint64_t counter = 0;
  auto p = std::filesystem::temp_directory_path() /
           ("signvid_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testsup
