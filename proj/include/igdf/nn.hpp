#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "igdf/matrix.hpp"
#include "igdf/rng.hpp"

namespace igdf {

// Dense MLP, ReLU hidden layers, identity output. Weights are [out, in].
// All math is double precision; the ReLU subgradient at 0 is 0.
struct Mlp {
  std::vector<int> dims;
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;

  int in_dim() const { return dims.front(); }
  int out_dim() const { return dims.back(); }
  int n_layers() const { return static_cast<int>(weights.size()); }
  std::size_t n_params() const;

  // Scaled-uniform fan-in init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static Mlp init(std::vector<int> dims, Rng& rng);
  static Mlp zeros(std::vector<int> dims);
};

struct ForwardCache {
  Matrix input;
  std::vector<Matrix> pre;   // pre-activation per layer
  std::vector<Matrix> post;  // post-activation per layer (last = output)
};

struct MlpGrads {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;

  static MlpGrads zeros_like(const Mlp& m);
  void accumulate(const MlpGrads& other, double scale = 1.0);
};

// Batched forward; rows of x are inputs. The cache, if given, is sufficient
// for backward.
Matrix mlp_forward(const Mlp& m, const Matrix& x, ForwardCache* cache = nullptr);

// Exact reverse-mode gradients. Returns the input gradient; parameter
// gradients are accumulated into grads.
Matrix mlp_backward(const Mlp& m, const ForwardCache& cache, const Matrix& dout, MlpGrads& grads);

// Row-wise projection to the unit sphere. Rows with norm below 1e-8 get the
// 1e-8 stabilizer added to the denominator.
Matrix normalize_sphere(const Matrix& x);
// Gradient of normalize_sphere given the raw input and upstream gradient.
Matrix normalize_sphere_backward(const Matrix& x, const Matrix& dy);

// Bias-corrected adaptive-moment update; operates on flat parameter views.
struct AdamState {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<double> m;
  std::vector<double> v;

  static AdamState make(std::size_t n_params, double lr);
};

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

// Flat parameter packing in declared layer order: weights then bias, layer by
// layer. Used by the optimizer and the checkpoint format.
std::vector<double> flatten_params(const Mlp& m);
void unflatten_params(Mlp& m, std::span<const double> flat);
std::vector<double> flatten_grads(const Mlp& m, const MlpGrads& g);

// Convenience: one Adam step applied to an Mlp in place.
void adam_step_mlp(AdamState& state, Mlp& m, const MlpGrads& g);

// Checkpoint format: "igdf-net v1; dims=...; seed=..." + flat parameters.
void save_net(std::ostream& os, const Mlp& m, std::uint64_t seed);
Mlp load_net(std::istream& is, std::uint64_t* seed_out = nullptr);

// Central finite-difference check. f evaluates the scalar loss at the given
// flat parameters; returns the max relative error between analytic and
// numeric gradients (relative to max(1, |analytic|, |numeric|) per entry).
double gradient_check(const std::function<double(std::span<const double>)>& f,
                      std::vector<double> params, std::span<const double> analytic,
                      double step = 1e-6);

}  // namespace igdf
