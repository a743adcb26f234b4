#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "glyco/mechsim.hpp"

namespace glyco::nn {

using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

struct Node {
  Matrix value;
  Matrix grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;  // pushes this->grad into parents
  bool requires_grad = false;
};

/// Handle to a node of the recorded computation. Values are 2-D (rows are
/// batch entries); scalars are 1x1.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor constant(Matrix value);
  static Tensor parameter(Matrix value);
  static Tensor scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  std::array<Eigen::Index, 2> shape() const { return {rows(), cols()}; }
  double item() const { return node_->value(0, 0); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Reverse-mode pass from a scalar loss. Gradients of every reachable node
/// (parameters included) are reset first, so repeated calls give the same
/// result. Throws NonFinite if a parameter gradient is NaN/Inf.
void backward(const Tensor& loss);

// --- elementwise and structural ops -----------------------------------------
// Binary ops accept b with the shape of a, or broadcast as 1xN, Mx1 or 1x1.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor square(const Tensor& a);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count);
/// Sum of every element -> 1x1.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Per-row sum -> Mx1.
Tensor row_sum(const Tensor& a);
/// lo + width * sigmoid(a), with lo/width given per column.
Tensor constrain_cols(const Tensor& a, const Eigen::RowVectorXd& lo, const Eigen::RowVectorXd& width);

/// Inverted dropout: in training, zero each element with probability `rate`
/// and scale survivors by 1/(1-rate); identity otherwise.
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);

/// Mean softmax cross-entropy of logits (BxK) against class indices.
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

/// Per-row sum over unmasked entries of log N(obs | mean, sigma^2).
/// obs/mask are constants shaped like mean; sigma is 1x1.
Tensor gaussian_log_likelihood(const Matrix& obs, const Tensor& mean, const Tensor& sigma, const Matrix& mask);

/// Per-row sum of KL(N(mq, sq^2) || N(mp, sp^2)); prior rows (1xD) broadcast.
Tensor kl_normal(const Tensor& mq, const Tensor& sq, const Eigen::RowVectorXd& mp, const Eigen::RowVectorXd& sp);

/// Mechanistic decoder: rows of u (Bx60), x0 (Bx4), w (Bx6) -> glucose (Bx60),
/// differentiated through the Euler scheme.
/// `row_labels`, when given, names the offending row in simulation errors.
Tensor mech_decode(const Tensor& u, const Tensor& x0, const Tensor& w, const SimConfig& cfg,
                   const std::vector<std::string>* row_labels = nullptr);

// --- parameters, layers -----------------------------------------------------

/// Ordered, named parameter registry shared by a model and its optimizer.
class ParameterStore {
 public:
  Tensor create(const std::string& name, Matrix init);
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return params_; }
  std::vector<Tensor> tensors() const;
  Tensor& at(const std::string& name);
  std::size_t count() const;  // total scalar parameters
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
};

Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng);

struct Dense {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out

  Dense() = default;
  Dense(ParameterStore& store, const std::string& name, int in, int out, Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

struct LstmCell {
  Tensor w_input;   // in x 4H, gate blocks [input, forget, cell, output]
  Tensor w_hidden;  // H x 4H
  Tensor bias;      // 1 x 4H, forget block initialised to 1
  int hidden = 0;

  LstmCell() = default;
  LstmCell(ParameterStore& store, const std::string& name, int in, int hidden, Rng& rng);

  struct State {
    Tensor h;
    Tensor c;
  };
  State step(const Tensor& x, const State& prev) const;
  State zero_state(Eigen::Index batch) const;
};

/// Runs a cell over a sequence (forward or reversed order). Outputs are in
/// the original timestep order.
std::vector<Tensor> run_lstm(const LstmCell& cell, const std::vector<Tensor>& xs, bool reverse,
                             LstmCell::State init = {});

struct RecurrentEncoderConfig {
  int layers = 2;
  int hidden = 32;
  bool bidirectional = true;
  int input_dim = 24;
};

struct RecurrentEncoding {
  std::vector<Tensor> outputs;  // per timestep, B x (directions*hidden)
  Tensor summary;               // concat of each direction's final hidden state, top layer
};

class RecurrentEncoder {
 public:
  RecurrentEncoder() = default;
  RecurrentEncoder(ParameterStore& store, const std::string& name, const RecurrentEncoderConfig& cfg, Rng& rng);
  RecurrentEncoding operator()(const std::vector<Tensor>& xs) const;
  int output_dim() const { return cfg_.hidden * (cfg_.bidirectional ? 2 : 1); }
  const RecurrentEncoderConfig& config() const { return cfg_; }

 private:
  RecurrentEncoderConfig cfg_;
  std::vector<LstmCell> forward_;
  std::vector<LstmCell> backward_;
};

// --- optimisation -----------------------------------------------------------

struct AdamState {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

/// Bias-corrected ADAM update using each parameter's current gradient.
void adam_step(const std::vector<Tensor>& params, AdamState& state);

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
  std::string worst;
};

/// Compares backward() against central differences on up to `max_entries`
/// randomly chosen parameter entries. rel = |a-n| / max(|a|, |n|, floor).
GradCheckResult grad_check(const std::function<Tensor()>& loss_fn, const ParameterStore& store, int max_entries,
                           double step, std::uint64_t seed, double floor = 1e-6);

}  // namespace glyco::nn
