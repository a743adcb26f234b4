#include "glyco/nncore.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "glyco/error.hpp"

namespace glyco::nn {

namespace {

using NodePtr = std::shared_ptr<Node>;

Tensor make(Matrix value, std::vector<Tensor> inputs, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const auto& t : inputs) {
    if (t.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    // Constants are kept too so backward functions can index inputs by position.
    for (auto& t : inputs) node->parents.push_back(t.node());
    node->backward_fn = std::move(fn);
  }
  return Tensor(node);
}

// Adds g (shape of the op output) into the gradient of p, reducing over
// broadcast dimensions.
void accumulate(Node& p, const Matrix& g) {
  if (!p.requires_grad) return;
  if (p.value.rows() == g.rows() && p.value.cols() == g.cols()) {
    p.grad += g;
  } else if (p.value.rows() == 1 && p.value.cols() == g.cols()) {
    p.grad += g.colwise().sum();
  } else if (p.value.cols() == 1 && p.value.rows() == g.rows()) {
    p.grad += g.rowwise().sum();
  } else {
    p.grad(0, 0) += g.sum();
  }
}

enum class Bcast { Same, Row, Col, Scalar };

Bcast broadcast_kind(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Bcast::Same;
  if (b.rows() == 1 && b.cols() == 1) return Bcast::Scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::Row;
  if (b.cols() == 1 && b.rows() == a.rows()) return Bcast::Col;
  throw std::invalid_argument(std::string(op) + ": incompatible shapes");
}

// b expanded to a's shape.
Matrix expand(const Matrix& b, Eigen::Index rows, Eigen::Index cols, Bcast kind) {
  switch (kind) {
    case Bcast::Same: return b;
    case Bcast::Row: return b.replicate(rows, 1);
    case Bcast::Col: return b.replicate(1, cols);
    case Bcast::Scalar: return Matrix::Constant(rows, cols, b(0, 0));
  }
  return b;
}

double softplus_scalar(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor Tensor::constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Tensor(node);
}

Tensor Tensor::parameter(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->grad = Matrix::Zero(node->value.rows(), node->value.cols());
  return Tensor(node);
}

void backward(const Tensor& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) throw std::invalid_argument("backward: loss must be 1x1");
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS -> topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) n->grad = Matrix::Zero(n->value.rows(), n->value.cols());
  loss.node()->grad(0, 0) = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
  for (Node* n : order) {
    if (n->parents.empty() && !n->grad.allFinite()) {
      throw Error(ErrorKind::NonFinite, "non-finite parameter gradient");
    }
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  const auto kind = broadcast_kind(a.value(), b.value(), "add");
  Matrix out = a.value() + expand(b.value(), a.rows(), a.cols(), kind);
  return make(std::move(out), {a, b}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
    if (self.parents.size() > 1) accumulate(*self.parents[1], self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const auto kind = broadcast_kind(a.value(), b.value(), "sub");
  Matrix out = a.value() - expand(b.value(), a.rows(), a.cols(), kind);
  return make(std::move(out), {a, b}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
    accumulate(*self.parents[1], -self.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const auto kind = broadcast_kind(a.value(), b.value(), "mul");
  Matrix bx = expand(b.value(), a.rows(), a.cols(), kind);
  Matrix out = a.value().cwiseProduct(bx);
  return make(std::move(out), {a, b}, [bx](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) accumulate(pa, self.grad.cwiseProduct(bx));
    if (pb.requires_grad) accumulate(pb, self.grad.cwiseProduct(pa.value));
  });
}

Tensor scale(const Tensor& a, double s) {
  return make(a.value() * s, {a}, [s](Node& self) { accumulate(*self.parents[0], self.grad * s); });
}

Tensor add_scalar(const Tensor& a, double s) {
  return make(a.value().array() + s, {a}, [](Node& self) { accumulate(*self.parents[0], self.grad); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  Matrix out = a.value() * b.value();
  return make(std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) pa.grad.noalias() += self.grad * pb.value.transpose();
    if (pb.requires_grad) pb.grad.noalias() += pa.value.transpose() * self.grad;
  });
}

Tensor sigmoid(const Tensor& a) {
  Matrix out = a.value().unaryExpr(&sigmoid_scalar);
  return make(out, {a}, [out](Node& self) {
    accumulate(*self.parents[0], self.grad.cwiseProduct(out.cwiseProduct((1.0 - out.array()).matrix())));
  });
}

Tensor tanh(const Tensor& a) {
  Matrix out = a.value().array().tanh();
  return make(out, {a}, [out](Node& self) {
    accumulate(*self.parents[0], self.grad.cwiseProduct((1.0 - out.array().square()).matrix()));
  });
}

Tensor exp(const Tensor& a) {
  Matrix out = a.value().array().exp();
  return make(out, {a}, [out](Node& self) { accumulate(*self.parents[0], self.grad.cwiseProduct(out)); });
}

Tensor log(const Tensor& a) {
  Matrix out = a.value().array().log();
  return make(std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    accumulate(p, self.grad.cwiseQuotient(p.value));
  });
}

Tensor softplus(const Tensor& a) {
  Matrix out = a.value().unaryExpr(&softplus_scalar);
  return make(std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    accumulate(p, self.grad.cwiseProduct(p.value.unaryExpr(&sigmoid_scalar)));
  });
}

Tensor square(const Tensor& a) {
  return make(a.value().array().square(), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    accumulate(p, 2.0 * self.grad.cwiseProduct(p.value));
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: nothing to concatenate");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  std::vector<Eigen::Index> widths;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row counts differ");
    widths.push_back(p.cols());
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return make(std::move(out), parts, [widths](Node& self) {
    Eigen::Index offset = 0;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      Node& p = *self.parents[i];
      if (p.requires_grad) p.grad += self.grad.middleCols(offset, widths[i]);
      offset += widths[i];
    }
  });
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw std::invalid_argument("slice_cols: out of range");
  Matrix out = a.value().middleCols(start, count);
  return make(std::move(out), {a}, [start, count](Node& self) {
    Node& p = *self.parents[0];
    if (p.requires_grad) p.grad.middleCols(start, count) += self.grad;
  });
}

Tensor sum(const Tensor& a) {
  return make(Matrix::Constant(1, 1, a.value().sum()), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    p.grad.array() += self.grad(0, 0);
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.value().size());
  return make(Matrix::Constant(1, 1, a.value().sum() / n), {a}, [n](Node& self) {
    Node& p = *self.parents[0];
    p.grad.array() += self.grad(0, 0) / n;
  });
}

Tensor row_sum(const Tensor& a) {
  return make(a.value().rowwise().sum(), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    p.grad.colwise() += self.grad.col(0);
  });
}

Tensor constrain_cols(const Tensor& a, const Eigen::RowVectorXd& lo, const Eigen::RowVectorXd& width) {
  if (lo.size() != a.cols() || width.size() != a.cols()) throw std::invalid_argument("constrain_cols: width mismatch");
  Matrix s = a.value().unaryExpr(&sigmoid_scalar);
  Matrix out = (s.array().rowwise() * width.array()).rowwise() + lo.array();
  return make(std::move(out), {a}, [s, width](Node& self) {
    Matrix d = (s.array() * (1.0 - s.array())).rowwise() * width.array();
    accumulate(*self.parents[0], self.grad.cwiseProduct(d));
  });
}

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout: rate must lie in [0,1)");
  if (!training || rate == 0.0) return x;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix mask(x.rows(), x.cols());
  const double keep = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < mask.rows(); ++i)
    for (Eigen::Index j = 0; j < mask.cols(); ++j) mask(i, j) = unif(rng) < rate ? 0.0 : keep;
  return mul(x, Tensor::constant(std::move(mask)));
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  const auto& z = logits.value();
  if (static_cast<Eigen::Index>(labels.size()) != z.rows()) {
    throw std::invalid_argument("softmax_cross_entropy: one label per row");
  }
  Matrix probs(z.rows(), z.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double mx = z.row(i).maxCoeff();
    Eigen::RowVectorXd e = (z.row(i).array() - mx).exp();
    const double total = e.sum();
    probs.row(i) = e / total;
    loss -= (z(i, labels[i]) - mx) - std::log(total);
  }
  const double n = static_cast<double>(z.rows());
  return make(Matrix::Constant(1, 1, loss / n), {logits}, [probs, labels, n](Node& self) {
    Matrix g = probs;
    for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, labels[i]) -= 1.0;
    accumulate(*self.parents[0], g * (self.grad(0, 0) / n));
  });
}

Tensor gaussian_log_likelihood(const Matrix& obs, const Tensor& mean, const Tensor& sigma, const Matrix& mask) {
  if (obs.rows() != mean.rows() || obs.cols() != mean.cols() || mask.rows() != obs.rows() ||
      mask.cols() != obs.cols() || sigma.rows() != 1 || sigma.cols() != 1) {
    throw std::invalid_argument("gaussian_log_likelihood: shape mismatch");
  }
  constexpr double kHalfLog2Pi = 0.91893853320467274178;
  const double s = sigma.item();
  Matrix resid = (obs - mean.value()).cwiseProduct(mask);
  const Eigen::VectorXd counts = mask.rowwise().sum();
  Matrix out = -(resid.array().square().rowwise().sum() / (2.0 * s * s)).matrix() -
               (counts.array() * (std::log(s) + kHalfLog2Pi)).matrix();
  return make(std::move(out), {mean, sigma}, [resid, counts, s](Node& self) {
    Node& pm = *self.parents[0];
    Node& ps = *self.parents[1];
    const Eigen::VectorXd& g = self.grad.col(0);
    if (pm.requires_grad) pm.grad += (resid.array().colwise() * g.array()).matrix() / (s * s);
    if (ps.requires_grad) {
      const Eigen::VectorXd sq = resid.array().square().rowwise().sum();
      ps.grad(0, 0) += (g.array() * (sq.array() / (s * s * s) - counts.array() / s)).sum();
    }
  });
}

Tensor kl_normal(const Tensor& mq, const Tensor& sq, const Eigen::RowVectorXd& mp, const Eigen::RowVectorXd& sp) {
  if (mq.cols() != mp.size() || sq.cols() != sp.size() || mq.rows() != sq.rows() || mq.cols() != sq.cols()) {
    throw std::invalid_argument("kl_normal: shape mismatch");
  }
  Matrix diff = mq.value().rowwise() - mp;
  Eigen::ArrayXXd var_p = (sp.array().square()).replicate(mq.rows(), 1);
  Eigen::ArrayXXd s = sq.value().array();
  Eigen::ArrayXXd terms = (sp.array().log().replicate(mq.rows(), 1) - s.log()) +
                          (s.square() + diff.array().square()) / (2.0 * var_p) - 0.5;
  Matrix out = terms.rowwise().sum().matrix();
  return make(std::move(out), {mq, sq}, [diff, var_p, s](Node& self) {
    Node& pm = *self.parents[0];
    Node& ps = *self.parents[1];
    const Eigen::ArrayXd g = self.grad.col(0).array();
    if (pm.requires_grad) pm.grad += ((diff.array() / var_p).colwise() * g).matrix();
    if (ps.requires_grad) ps.grad += ((s / var_p - 1.0 / s).colwise() * g).matrix();
  });
}

namespace {

void unpack_row(const Matrix& u, const Matrix& x0, const Matrix& w, Eigen::Index b, CarbRate& ur, MechState& s,
                MechParams& p) {
  for (int t = 0; t < kSeqLen; ++t) ur[t] = u(b, t);
  s = {x0(b, 0), x0(b, 1), x0(b, 2), x0(b, 3)};
  p = {w(b, 0), w(b, 1), w(b, 2), w(b, 3), w(b, 4), w(b, 5)};
}

}  // namespace

Tensor mech_decode(const Tensor& u, const Tensor& x0, const Tensor& w, const SimConfig& cfg,
                   const std::vector<std::string>* row_labels) {
  const Eigen::Index batch = u.rows();
  if (u.cols() != kSeqLen || x0.cols() != 4 || w.cols() != 6 || x0.rows() != batch || w.rows() != batch) {
    throw std::invalid_argument("mech_decode: expected Bx60, Bx4, Bx6 inputs");
  }
  Matrix out(batch, kSeqLen);
  for (Eigen::Index b = 0; b < batch; ++b) {
    CarbRate ur;
    MechState s;
    MechParams p;
    unpack_row(u.value(), x0.value(), w.value(), b, ur, s, p);
    try {
      const auto traj = simulate(s, p, ur, cfg);
      for (int t = 0; t < kSeqLen; ++t) out(b, t) = traj[t].G;
    } catch (const Error& e) {
      if (!row_labels || b >= static_cast<Eigen::Index>(row_labels->size())) throw;
      throw Error(e.kind(), "record " + (*row_labels)[b] + ": " + e.what());
    }
  }
  return make(std::move(out), {u, x0, w}, [cfg](Node& self) {
    Node& pu = *self.parents[0];
    Node& px = *self.parents[1];
    Node& pw = *self.parents[2];
    for (Eigen::Index b = 0; b < self.value.rows(); ++b) {
      CarbRate ur;
      MechState s;
      MechParams p;
      unpack_row(pu.value, px.value, pw.value, b, ur, s, p);
      std::array<double, kSeqLen> dg{};
      for (int t = 0; t < kSeqLen; ++t) dg[t] = self.grad(b, t);
      const auto g = simulate_vjp(s, p, ur, cfg, dg);
      if (pu.requires_grad)
        for (int t = 0; t < kSeqLen; ++t) pu.grad(b, t) += g.u[t];
      if (px.requires_grad)
        for (int i = 0; i < 4; ++i) px.grad(b, i) += g.x0[i];
      if (pw.requires_grad)
        for (int i = 0; i < 6; ++i) pw.grad(b, i) += g.params[i];
    }
  });
}

// --- parameters and layers ---------------------------------------------------

Tensor ParameterStore::create(const std::string& name, Matrix init) {
  for (const auto& [n, t] : params_) {
    if (n == name) throw std::invalid_argument("duplicate parameter name " + name);
  }
  params_.emplace_back(name, Tensor::parameter(std::move(init)));
  return params_.back().second;
}

std::vector<Tensor> ParameterStore::tensors() const {
  std::vector<Tensor> out;
  for (const auto& [n, t] : params_) out.push_back(t);
  return out;
}

Tensor& ParameterStore::at(const std::string& name) {
  for (auto& [n, t] : params_)
    if (n == name) return t;
  throw std::out_of_range("no parameter named " + name);
}

std::size_t ParameterStore::count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += static_cast<std::size_t>(t.value().size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [n, t] : params_) t.node()->grad.setZero(t.rows(), t.cols());
}

Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> unif(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = unif(rng);
  return m;
}

Dense::Dense(ParameterStore& store, const std::string& name, int in, int out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = store.create(name + ".weight", uniform_init(in, out, bound, rng));
  bias = store.create(name + ".bias", uniform_init(1, out, bound, rng));
}

Tensor Dense::operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }

LstmCell::LstmCell(ParameterStore& store, const std::string& name, int in, int hidden_size, Rng& rng)
    : hidden(hidden_size) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in + hidden_size));
  w_input = store.create(name + ".w_input", uniform_init(in, 4 * hidden_size, bound, rng));
  w_hidden = store.create(name + ".w_hidden", uniform_init(hidden_size, 4 * hidden_size, bound, rng));
  Matrix b = uniform_init(1, 4 * hidden_size, bound, rng);
  b.middleCols(hidden_size, hidden_size).setOnes();
  bias = store.create(name + ".bias", std::move(b));
}

LstmCell::State LstmCell::zero_state(Eigen::Index batch) const {
  return {Tensor::constant(Matrix::Zero(batch, hidden)), Tensor::constant(Matrix::Zero(batch, hidden))};
}

LstmCell::State LstmCell::step(const Tensor& x, const State& prev) const {
  const Tensor gates = add(add(matmul(x, w_input), matmul(prev.h, w_hidden)), bias);
  const Tensor i = sigmoid(slice_cols(gates, 0, hidden));
  const Tensor f = sigmoid(slice_cols(gates, hidden, hidden));
  const Tensor g = tanh(slice_cols(gates, 2 * hidden, hidden));
  const Tensor o = sigmoid(slice_cols(gates, 3 * hidden, hidden));
  const Tensor c = add(mul(f, prev.c), mul(i, g));
  return {mul(o, tanh(c)), c};
}

std::vector<Tensor> run_lstm(const LstmCell& cell, const std::vector<Tensor>& xs, bool reverse,
                             LstmCell::State init) {
  if (xs.empty()) throw std::invalid_argument("run_lstm: empty sequence");
  LstmCell::State state = init.h.defined() ? init : cell.zero_state(xs[0].rows());
  std::vector<Tensor> out(xs.size());
  const auto n = static_cast<std::ptrdiff_t>(xs.size());
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    const std::ptrdiff_t t = reverse ? n - 1 - k : k;
    state = cell.step(xs[t], state);
    out[t] = state.h;
  }
  return out;
}

RecurrentEncoder::RecurrentEncoder(ParameterStore& store, const std::string& name, const RecurrentEncoderConfig& cfg,
                                   Rng& rng)
    : cfg_(cfg) {
  if (cfg.layers < 1 || cfg.hidden < 1 || cfg.input_dim < 1) throw std::invalid_argument("bad encoder config");
  int in = cfg.input_dim;
  for (int l = 0; l < cfg.layers; ++l) {
    forward_.emplace_back(store, name + ".l" + std::to_string(l) + ".fwd", in, cfg.hidden, rng);
    if (cfg.bidirectional) backward_.emplace_back(store, name + ".l" + std::to_string(l) + ".bwd", in, cfg.hidden, rng);
    in = output_dim();
  }
}

RecurrentEncoding RecurrentEncoder::operator()(const std::vector<Tensor>& xs) const {
  if (xs.empty()) throw std::invalid_argument("recurrent encoder: empty sequence");
  std::vector<Tensor> layer_in = xs;
  RecurrentEncoding enc;
  for (int l = 0; l < cfg_.layers; ++l) {
    auto fwd = run_lstm(forward_[l], layer_in, false);
    if (!cfg_.bidirectional) {
      layer_in = std::move(fwd);
      enc.summary = layer_in.back();
      continue;
    }
    auto bwd = run_lstm(backward_[l], layer_in, true);
    enc.summary = concat_cols({fwd.back(), bwd.front()});
    for (std::size_t t = 0; t < layer_in.size(); ++t) layer_in[t] = concat_cols({fwd[t], bwd[t]});
  }
  enc.outputs = std::move(layer_in);
  return enc;
}

// --- optimisation ---------------------------------------------------------------

void adam_step(const std::vector<Tensor>& params, AdamState& state) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Matrix::Zero(p.rows(), p.cols()));
      state.v.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: parameter count changed");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Node& n = *params[i].node();
    if (n.grad.size() != n.value.size()) continue;  // never touched by backward
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * n.grad;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * n.grad.cwiseAbs2();
    n.value.array() -= state.lr * (state.m[i].array() / c1) / ((state.v[i].array() / c2).sqrt() + state.eps);
  }
}

GradCheckResult grad_check(const std::function<Tensor()>& loss_fn, const ParameterStore& store, int max_entries,
                           double step, std::uint64_t seed, double floor) {
  const auto entries = store.entries();
  for (const auto& [name, t] : entries) t.node()->grad.setZero(t.rows(), t.cols());
  backward(loss_fn());
  std::vector<Matrix> analytic;
  for (const auto& [name, t] : entries) analytic.push_back(t.grad());

  std::vector<std::pair<std::size_t, Eigen::Index>> pool;
  for (std::size_t p = 0; p < entries.size(); ++p)
    for (Eigen::Index k = 0; k < entries[p].second.value().size(); ++k) pool.emplace_back(p, k);
  Rng rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  if (static_cast<int>(pool.size()) > max_entries) pool.resize(static_cast<std::size_t>(max_entries));

  GradCheckResult result;
  for (const auto& [p, k] : pool) {
    Matrix& value = entries[p].second.node()->value;
    const double saved = value(k % value.rows(), k / value.rows());
    double& slot = value(k % value.rows(), k / value.rows());
    slot = saved + step;
    const double up = loss_fn().item();
    slot = saved - step;
    const double down = loss_fn().item();
    slot = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic[p](k % value.rows(), k / value.rows());
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
    ++result.checked;
    if (rel > result.max_rel_error || result.worst.empty()) {
      if (rel >= result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst = entries[p].first + "[" + std::to_string(k) + "] analytic=" + std::to_string(a) +
                       " numeric=" + std::to_string(numeric);
      }
    }
  }
  return result;
}

}  // namespace glyco::nn
