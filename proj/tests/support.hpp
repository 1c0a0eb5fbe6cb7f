#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <unistd.h>

#include "textres/core/image.hpp"
#include "textres/core/rng.hpp"
#include "textres/nn/graph.hpp"
#include "textres/nn/params.hpp"

namespace textres::testing {

inline Image random_image(int h, int w, std::uint64_t seed, int channels = 3) {
  Rng rng(Seed{seed}, "test.image");
  Tensor t = Tensor::hwc(h, w, channels);
  for (auto& v : t.values()) v = rng.uniform();
  return Image(std::move(t), channels == 3 ? ColorSpace::RGB : ColorSpace::GRAY);
}

inline Tensor random_tensor(std::vector<int> shape, std::uint64_t seed, double stddev = 1.0) {
  Rng rng(Seed{seed}, "test.tensor");
  return rng.normal_tensor(std::move(shape), stddev);
}

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() / ("textres_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

struct GradCheckResult {
  int directions = 0;
  double worst_rel_error = 0.0;
};

/// Compares the analytic directional derivative of `loss` along random unit
/// directions in parameter space with a central difference of step h.
inline GradCheckResult check_param_gradients(nn::ParamSet& params,
                                             const std::function<nn::Var(nn::Graph&)>& loss, int directions,
                                             std::uint64_t seed, double h = 1e-5) {
  nn::Graph g;
  g.backward(loss(g));
  std::vector<double> grad;
  for (const Tensor& t : g.gradients(params)) grad.insert(grad.end(), t.values().begin(), t.values().end());
  const std::vector<double> base = params.flatten();

  auto eval = [&](const std::vector<double>& theta) {
    params.unflatten(theta);
    nn::Graph ge;
    return ge.value(loss(ge))[0];
  };

  GradCheckResult result;
  Rng rng(Seed{seed}, "test.gradcheck");
  for (int d = 0; d < directions; ++d) {
    std::vector<double> dir(base.size());
    double norm = 0.0;
    for (auto& v : dir) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    double analytic = 0.0;
    std::vector<double> plus = base, minus = base;
    for (std::size_t i = 0; i < dir.size(); ++i) {
      dir[i] /= norm;
      analytic += grad[i] * dir[i];
      plus[i] += h * dir[i];
      minus[i] -= h * dir[i];
    }
    const double numeric = (eval(plus) - eval(minus)) / (2.0 * h);
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    result.worst_rel_error = std::max(result.worst_rel_error, std::abs(analytic - numeric) / scale);
    ++result.directions;
  }
  params.unflatten(base);
  return result;
}

}  // namespace textres::testing
