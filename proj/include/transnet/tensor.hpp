#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "transnet/rng.hpp"

namespace transnet {

// Reverse-mode differentiable dense tensors, row-major, double precision,
// up to 4 axes. The op set is exactly what the planner/filter forward passes
// need; there is no general broadcasting and no control-flow capture.
//
// DTensor is a shared handle: copies alias the same storage. requires_grad
// marks a tensor as being on the differentiable path; its grad buffer has
// the same shape as the data and accumulates across backward() calls until
// zero_grad().

struct TensorData {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;  // same length as value when on the grad path
  bool requires_grad = false;
};

class DTensor {
 public:
  DTensor() = default;
  explicit DTensor(std::vector<int> shape, double fill = 0.0);
  static DTensor from_vector(std::vector<int> shape, std::vector<double> data);
  static DTensor randn(std::vector<int> shape, Rng& rng, double stddev);

  bool defined() const { return d_ != nullptr; }
  const std::vector<int>& shape() const { return d_->shape; }
  int ndim() const { return static_cast<int>(d_->shape.size()); }
  int extent(int axis) const { return d_->shape[static_cast<std::size_t>(axis)]; }
  std::size_t numel() const { return d_->value.size(); }

  double* data() { return d_->value.data(); }
  const double* data() const { return d_->value.data(); }
  std::vector<double>& values() { return d_->value; }
  const std::vector<double>& values() const { return d_->value; }

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool on);
  bool has_grad() const { return !d_->grad.empty(); }
  double* grad() { return d_->grad.data(); }
  const double* grad() const { return d_->grad.data(); }
  const std::vector<double>& grad_values() const { return d_->grad; }
  void zero_grad();

  // deep copy; the copy carries its own grad buffer
  DTensor clone() const;

  double scalar() const;  // value of a 1-element tensor

  // row-major index helpers
  double& at(int i0) { return d_->value[static_cast<std::size_t>(i0)]; }
  double& at(int i0, int i1);
  double& at(int i0, int i1, int i2);
  double& at(int i0, int i1, int i2, int i3);
  double get(int i0) const { return d_->value[static_cast<std::size_t>(i0)]; }
  double get(int i0, int i1) const;
  double get(int i0, int i1, int i2) const;
  double get(int i0, int i1, int i2, int i3) const;

  std::shared_ptr<TensorData> raw() const { return d_; }
  bool same_storage(const DTensor& other) const { return d_ == other.d_; }

 private:
  std::shared_ptr<TensorData> d_;
};

// Ordered record of executed differentiable operations. backward() zeroes
// the adjoint buffers of every recorded output, seeds the loss adjoint with
// one, and replays the records in reverse execution order exactly once.
// Leaf gradients accumulate across backward() calls and across tapes.
//
// A tape and the intermediates recorded on it belong to one worker thread;
// independent tapes may run concurrently.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }

  void record(std::shared_ptr<TensorData> output, std::function<void()> fn);
  void backward(const DTensor& loss);
  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::shared_ptr<TensorData> output;
    std::function<void()> fn;
  };
  std::vector<Node> nodes_;
  bool recording_ = true;
};

// ---- operations ----

// Same-size 2D convolution with zero padding. input (H,W,Cin), kernel
// (k,k,Cin,Cout) with k odd; out[y,x,co] = sum over the kernel window with
// out-of-range input read as zero. Differentiable in both arguments.
DTensor conv2d(Tape& tape, const DTensor& input, const DTensor& kernel);

// (H,W,C) -> (H,W,1) per-cell maximum over channels. The adjoint flows to
// the lowest-index argmax channel.
DTensor channel_max(Tape& tape, const DTensor& input);

// Numerically stable softmax along one axis.
DTensor softmax(Tape& tape, const DTensor& input, int axis);

// (H,W,depth) constant, 1 at each cell's index. Not differentiable.
DTensor one_hot(const std::vector<int>& indices, int h, int w, int depth);

// Elementwise with restricted broadcasting: b has the same shape as a, or
// a's shape with the last axis collapsed to 1, or is a single element.
DTensor mul(Tape& tape, const DTensor& a, const DTensor& b);
DTensor add(Tape& tape, const DTensor& a, const DTensor& b);

DTensor scale(Tape& tape, const DTensor& a, double factor);
DTensor relu(Tape& tape, const DTensor& a);

// Sum over one axis; the axis is removed (a 1-axis input reduces to {1}).
DTensor sum_axis(Tape& tape, const DTensor& a, int axis);
DTensor sum_all(Tape& tape, const DTensor& a);

// a / sum(a), one node. Throws when the total mass is not usable.
DTensor normalize_sum(Tape& tape, const DTensor& a);

// Same data, new shape of equal element count.
DTensor reshape(Tape& tape, const DTensor& a, std::vector<int> shape);

// Reverse both spatial axes of a (k,k,Cin,Cout) kernel tensor.
DTensor flip_spatial(Tape& tape, const DTensor& kernel);

// -log softmax(logits)[target] for 1-axis logits.
DTensor cross_entropy(Tape& tape, const DTensor& logits, int target);

// Central finite differences against the analytic adjoints on a fixed
// random projection of f's output. Returns the worst relative error with
// denominator max(|analytic|, |numeric|, 1e-8). f must be deterministic.
using TensorFn = std::function<DTensor(Tape&, const DTensor&)>;
double grad_check(const TensorFn& f, const DTensor& x, double eps = 1e-5);

std::string shape_to_string(const std::vector<int>& shape);

}  // namespace transnet
