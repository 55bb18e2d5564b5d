#include "igdf/nn.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace igdf {

std::size_t Mlp::n_params() const {
  std::size_t n = 0;
  for (int l = 0; l < n_layers(); ++l) n += weights[l].data.size() + biases[l].size();
  return n;
}

Mlp Mlp::init(std::vector<int> dims, Rng& rng) {
  if (dims.size() < 2) throw std::invalid_argument("Mlp: need at least input and output dims");
  Mlp m;
  m.dims = std::move(dims);
  for (std::size_t l = 0; l + 1 < m.dims.size(); ++l) {
    const int in = m.dims[l], out = m.dims[l + 1];
    if (in <= 0 || out <= 0) throw std::invalid_argument("Mlp: dims must be positive");
    Matrix w(out, in);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : w.data) v = rng.uniform(-bound, bound);
    m.weights.push_back(std::move(w));
    m.biases.emplace_back(out, 0.0);
  }
  return m;
}

Mlp Mlp::zeros(std::vector<int> dims) {
  Mlp m;
  m.dims = std::move(dims);
  for (std::size_t l = 0; l + 1 < m.dims.size(); ++l) {
    m.weights.emplace_back(m.dims[l + 1], m.dims[l]);
    m.biases.emplace_back(m.dims[l + 1], 0.0);
  }
  return m;
}

MlpGrads MlpGrads::zeros_like(const Mlp& m) {
  MlpGrads g;
  for (int l = 0; l < m.n_layers(); ++l) {
    g.weights.emplace_back(m.weights[l].rows, m.weights[l].cols);
    g.biases.emplace_back(m.biases[l].size(), 0.0);
  }
  return g;
}

void MlpGrads::accumulate(const MlpGrads& other, double scale) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    for (std::size_t i = 0; i < weights[l].data.size(); ++i)
      weights[l].data[i] += scale * other.weights[l].data[i];
    for (std::size_t i = 0; i < biases[l].size(); ++i) biases[l][i] += scale * other.biases[l][i];
  }
}

Matrix mlp_forward(const Mlp& m, const Matrix& x, ForwardCache* cache) {
  if (x.cols != m.in_dim()) throw std::invalid_argument("mlp_forward: input width mismatch");
  if (cache) {
    cache->input = x;
    cache->pre.clear();
    cache->post.clear();
  }
  Matrix h = x;
  for (int l = 0; l < m.n_layers(); ++l) {
    Matrix z = matmul_nt(h, m.weights[l]);
    for (int r = 0; r < z.rows; ++r)
      for (int c = 0; c < z.cols; ++c) z(r, c) += m.biases[l][c];
    if (cache) cache->pre.push_back(z);
    if (l + 1 < m.n_layers()) {
      for (double& v : z.data) v = v > 0.0 ? v : 0.0;  // ReLU; subgradient 0 at 0
    }
    if (cache) cache->post.push_back(z);
    h = std::move(z);
  }
  return h;
}

Matrix mlp_backward(const Mlp& m, const ForwardCache& cache, const Matrix& dout, MlpGrads& grads) {
  if (static_cast<int>(cache.pre.size()) != m.n_layers())
    throw std::invalid_argument("mlp_backward: stale or mismatched cache");
  if (dout.rows != cache.input.rows || dout.cols != m.out_dim())
    throw std::invalid_argument("mlp_backward: output grad shape mismatch");

  Matrix delta = dout;
  for (int l = m.n_layers() - 1; l >= 0; --l) {
    if (l + 1 < m.n_layers()) {
      // ReLU gate against the pre-activation of this layer.
      const Matrix& pre = cache.pre[l];
      for (std::size_t i = 0; i < delta.data.size(); ++i)
        if (pre.data[i] <= 0.0) delta.data[i] = 0.0;
    }
    const Matrix& layer_in = (l == 0) ? cache.input : cache.post[l - 1];
    // dW = delta^T * input, db = column sums of delta.
    Matrix dw = matmul_tn(delta, layer_in);
    for (std::size_t i = 0; i < dw.data.size(); ++i) grads.weights[l].data[i] += dw.data[i];
    for (int r = 0; r < delta.rows; ++r)
      for (int c = 0; c < delta.cols; ++c) grads.biases[l][c] += delta(r, c);
    if (l > 0) delta = matmul_nn(delta, m.weights[l]);
  }
  return matmul_nn(delta, m.weights[0]);
}

namespace {
constexpr double kNormFloor = 1e-8;

double stabilized_norm(std::span<const double> row) {
  double sq = 0.0;
  for (double v : row) sq += v * v;
  const double n = std::sqrt(sq);
  return n < kNormFloor ? n + kNormFloor : n;
}
}  // namespace

Matrix normalize_sphere(const Matrix& x) {
  Matrix y = x;
  for (int r = 0; r < x.rows; ++r) {
    const double d = stabilized_norm(x.row(r));
    for (int c = 0; c < x.cols; ++c) y(r, c) = x(r, c) / d;
  }
  return y;
}

Matrix normalize_sphere_backward(const Matrix& x, const Matrix& dy) {
  if (x.rows != dy.rows || x.cols != dy.cols)
    throw std::invalid_argument("normalize_sphere_backward: shape mismatch");
  Matrix dx(x.rows, x.cols);
  for (int r = 0; r < x.rows; ++r) {
    double sq = 0.0, dot = 0.0;
    for (int c = 0; c < x.cols; ++c) {
      sq += x(r, c) * x(r, c);
      dot += x(r, c) * dy(r, c);
    }
    const double n = std::sqrt(sq);
    const double d = n < kNormFloor ? n + kNormFloor : n;
    // y = x/d with d = n (+ floor); dy/dx = I/d - x x^T / (d^2 n).
    const double scale = (n > 0.0) ? dot / (d * d * n) : 0.0;
    for (int c = 0; c < x.cols; ++c) dx(r, c) = dy(r, c) / d - x(r, c) * scale;
  }
  return dx;
}

AdamState AdamState::make(std::size_t n_params, double lr) {
  AdamState st;
  st.lr = lr;
  st.m.assign(n_params, 0.0);
  st.v.assign(n_params, 0.0);
  return st;
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: size mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i]))
      throw std::runtime_error("adam_step: non-finite gradient at parameter " + std::to_string(i));
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

std::vector<double> flatten_params(const Mlp& m) {
  std::vector<double> out;
  out.reserve(m.n_params());
  for (int l = 0; l < m.n_layers(); ++l) {
    out.insert(out.end(), m.weights[l].data.begin(), m.weights[l].data.end());
    out.insert(out.end(), m.biases[l].begin(), m.biases[l].end());
  }
  return out;
}

void unflatten_params(Mlp& m, std::span<const double> flat) {
  if (flat.size() != m.n_params()) throw std::invalid_argument("unflatten_params: size mismatch");
  std::size_t pos = 0;
  for (int l = 0; l < m.n_layers(); ++l) {
    for (double& v : m.weights[l].data) v = flat[pos++];
    for (double& v : m.biases[l]) v = flat[pos++];
  }
}

std::vector<double> flatten_grads(const Mlp& m, const MlpGrads& g) {
  std::vector<double> out;
  out.reserve(m.n_params());
  for (int l = 0; l < m.n_layers(); ++l) {
    out.insert(out.end(), g.weights[l].data.begin(), g.weights[l].data.end());
    out.insert(out.end(), g.biases[l].begin(), g.biases[l].end());
  }
  return out;
}

void adam_step_mlp(AdamState& state, Mlp& m, const MlpGrads& g) {
  std::vector<double> p = flatten_params(m);
  const std::vector<double> gf = flatten_grads(m, g);
  adam_step(state, p, gf);
  unflatten_params(m, p);
}

void save_net(std::ostream& os, const Mlp& m, std::uint64_t seed) {
  os << "igdf-net v1; dims=";
  for (std::size_t i = 0; i < m.dims.size(); ++i) {
    if (i) os << ",";
    os << m.dims[i];
  }
  os << "; seed=" << seed << "\n";
  const std::vector<double> flat = flatten_params(m);
  char buf[64];
  for (std::size_t i = 0; i < flat.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", flat[i]);
    os << buf << (i + 1 == flat.size() ? "" : " ");
  }
  os << "\n";
}

Mlp load_net(std::istream& is, std::uint64_t* seed_out) {
  std::string header;
  if (!std::getline(is, header)) throw std::runtime_error("load_net: missing header");
  if (header.rfind("igdf-net v1;", 0) != 0)
    throw std::runtime_error("load_net: bad header: " + header);
  const auto dims_pos = header.find("dims=");
  const auto seed_pos = header.find("seed=");
  if (dims_pos == std::string::npos || seed_pos == std::string::npos)
    throw std::runtime_error("load_net: malformed header");
  std::vector<int> dims;
  {
    std::string dims_str = header.substr(dims_pos + 5, header.find(';', dims_pos) - dims_pos - 5);
    std::stringstream ss(dims_str);
    std::string tok;
    while (std::getline(ss, tok, ',')) dims.push_back(std::stoi(tok));
  }
  if (seed_out) *seed_out = std::stoull(header.substr(seed_pos + 5));
  Mlp m = Mlp::zeros(dims);
  std::vector<double> flat(m.n_params());
  for (double& v : flat)
    if (!(is >> v)) throw std::runtime_error("load_net: truncated parameter array");
  is.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
  unflatten_params(m, flat);
  return m;
}

double gradient_check(const std::function<double(std::span<const double>)>& f,
                      std::vector<double> params, std::span<const double> analytic, double step) {
  if (params.size() != analytic.size())
    throw std::invalid_argument("gradient_check: size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + step;
    const double fp = f(params);
    params[i] = saved - step;
    const double fm = f(params);
    params[i] = saved;
    const double numeric = (fp - fm) / (2.0 * step);
    const double denom = std::max({1.0, std::abs(numeric), std::abs(analytic[i])});
    worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
  }
  return worst;
}

}  // namespace igdf
