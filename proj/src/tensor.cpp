#include "transnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace transnet {

namespace {

std::size_t shape_numel(const std::vector<int>& shape) {
  if (shape.empty()) throw std::invalid_argument("empty shape");
  std::size_t n = 1;
  for (int e : shape) {
    if (e <= 0) throw std::invalid_argument("non-positive extent in shape " + shape_to_string(shape));
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

void check_axis(const DTensor& t, int axis) {
  if (axis < 0 || axis >= t.ndim())
    throw std::invalid_argument("axis " + std::to_string(axis) + " out of range for shape " +
                                shape_to_string(t.shape()));
}

}  // namespace

std::string shape_to_string(const std::vector<int>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

DTensor::DTensor(std::vector<int> shape, double fill) {
  const std::size_t n = shape_numel(shape);
  d_ = std::make_shared<TensorData>();
  d_->shape = std::move(shape);
  d_->value.assign(n, fill);
}

DTensor DTensor::from_vector(std::vector<int> shape, std::vector<double> data) {
  const std::size_t n = shape_numel(shape);
  if (n != data.size())
    throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_to_string(shape));
  DTensor t;
  t.d_ = std::make_shared<TensorData>();
  t.d_->shape = std::move(shape);
  t.d_->value = std::move(data);
  return t;
}

DTensor DTensor::randn(std::vector<int> shape, Rng& rng, double stddev) {
  DTensor t(std::move(shape));
  for (double& v : t.d_->value) v = rng.normal() * stddev;
  return t;
}

void DTensor::set_requires_grad(bool on) {
  d_->requires_grad = on;
  if (on && d_->grad.size() != d_->value.size())
    d_->grad.assign(d_->value.size(), 0.0);
  if (!on) d_->grad.clear();
}

void DTensor::zero_grad() {
  std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

DTensor DTensor::clone() const {
  DTensor t;
  t.d_ = std::make_shared<TensorData>(*d_);
  return t;
}

double DTensor::scalar() const {
  if (numel() != 1)
    throw std::invalid_argument("scalar() on tensor of shape " + shape_to_string(shape()));
  return d_->value[0];
}

double& DTensor::at(int i0, int i1) {
  return d_->value[static_cast<std::size_t>(i0) * d_->shape[1] + i1];
}
double& DTensor::at(int i0, int i1, int i2) {
  return d_->value[(static_cast<std::size_t>(i0) * d_->shape[1] + i1) * d_->shape[2] + i2];
}
double& DTensor::at(int i0, int i1, int i2, int i3) {
  return d_->value[((static_cast<std::size_t>(i0) * d_->shape[1] + i1) * d_->shape[2] + i2) *
                       d_->shape[3] +
                   i3];
}
double DTensor::get(int i0, int i1) const {
  return d_->value[static_cast<std::size_t>(i0) * d_->shape[1] + i1];
}
double DTensor::get(int i0, int i1, int i2) const {
  return d_->value[(static_cast<std::size_t>(i0) * d_->shape[1] + i1) * d_->shape[2] + i2];
}
double DTensor::get(int i0, int i1, int i2, int i3) const {
  return d_->value[((static_cast<std::size_t>(i0) * d_->shape[1] + i1) * d_->shape[2] + i2) *
                       d_->shape[3] +
                   i3];
}

void Tape::record(std::shared_ptr<TensorData> output, std::function<void()> fn) {
  nodes_.push_back(Node{std::move(output), std::move(fn)});
}

void Tape::backward(const DTensor& loss) {
  if (loss.numel() != 1)
    throw std::invalid_argument("backward() needs a scalar loss, got shape " +
                                shape_to_string(loss.shape()));
  if (!loss.requires_grad() || !loss.has_grad())
    throw std::invalid_argument("backward() loss is not connected to differentiable inputs");
  for (Node& n : nodes_)
    std::fill(n.output->grad.begin(), n.output->grad.end(), 0.0);
  loss.raw()->grad[0] = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) nodes_[i].fn();
}

void Tape::clear() { nodes_.clear(); }

namespace {

// Shared op plumbing: an output participates in differentiation when the
// tape records and at least one input is on the grad path.
DTensor make_output(Tape& tape, std::vector<int> shape,
                    std::initializer_list<const DTensor*> inputs) {
  DTensor out(std::move(shape));
  if (tape.recording()) {
    bool needs = false;
    for (const DTensor* in : inputs) needs = needs || in->requires_grad();
    if (needs) out.set_requires_grad(true);
  }
  return out;
}

bool want_grad(const DTensor& out) { return out.requires_grad(); }

}  // namespace

DTensor conv2d(Tape& tape, const DTensor& input, const DTensor& kernel) {
  if (input.ndim() != 3)
    throw std::invalid_argument("conv2d input must be (H,W,Cin), got " +
                                shape_to_string(input.shape()));
  if (kernel.ndim() != 4)
    throw std::invalid_argument("conv2d kernel must be (k,k,Cin,Cout), got " +
                                shape_to_string(kernel.shape()));
  const int h = input.extent(0), w = input.extent(1), cin = input.extent(2);
  const int k = kernel.extent(0);
  if (kernel.extent(1) != k)
    throw std::invalid_argument("conv2d kernel must be square, got " +
                                shape_to_string(kernel.shape()));
  if (k % 2 == 0) throw std::invalid_argument("conv2d kernel width must be odd, got " + std::to_string(k));
  if (kernel.extent(2) != cin)
    throw std::invalid_argument("conv2d channel mismatch: input Cin=" + std::to_string(cin) +
                                ", kernel Cin=" + std::to_string(kernel.extent(2)));
  const int cout = kernel.extent(3);
  const int p = (k - 1) / 2;

  DTensor out = make_output(tape, {h, w, cout}, {&input, &kernel});
  const double* in = input.data();
  const double* kw = kernel.data();
  double* o = out.data();

  // inner loop over cout: kernel rows are contiguous in cout
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double* orow = o + (static_cast<std::size_t>(y) * w + x) * cout;
      for (int dy = 0; dy < k; ++dy) {
        const int iy = y + dy - p;
        if (iy < 0 || iy >= h) continue;
        for (int dx = 0; dx < k; ++dx) {
          const int ix = x + dx - p;
          if (ix < 0 || ix >= w) continue;
          const double* irow = in + (static_cast<std::size_t>(iy) * w + ix) * cin;
          const double* krow = kw + (static_cast<std::size_t>(dy) * k + dx) * cin * cout;
          for (int ci = 0; ci < cin; ++ci) {
            const double v = irow[ci];
            const double* kc = krow + static_cast<std::size_t>(ci) * cout;
            for (int co = 0; co < cout; ++co) orow[co] += v * kc[co];
          }
        }
      }
    }
  }

  if (want_grad(out)) {
    tape.record(out.raw(), [input, kernel, out, h, w, cin, k, cout, p]() {
      const double* g = out.grad();
      const double* in = input.data();
      const double* kw = kernel.data();
      double* gin = input.requires_grad() ? input.raw()->grad.data() : nullptr;
      double* gk = kernel.requires_grad() ? kernel.raw()->grad.data() : nullptr;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double* grow = g + (static_cast<std::size_t>(y) * w + x) * cout;
          for (int dy = 0; dy < k; ++dy) {
            const int iy = y + dy - p;
            if (iy < 0 || iy >= h) continue;
            for (int dx = 0; dx < k; ++dx) {
              const int ix = x + dx - p;
              if (ix < 0 || ix >= w) continue;
              const std::size_t ibase = (static_cast<std::size_t>(iy) * w + ix) * cin;
              const std::size_t kbase = (static_cast<std::size_t>(dy) * k + dx) * cin * cout;
              for (int ci = 0; ci < cin; ++ci) {
                const double* kc = kw + kbase + static_cast<std::size_t>(ci) * cout;
                double acc = 0.0;
                if (gin) {
                  for (int co = 0; co < cout; ++co) acc += grow[co] * kc[co];
                  gin[ibase + ci] += acc;
                }
                if (gk) {
                  const double v = in[ibase + ci];
                  double* gkc = gk + kbase + static_cast<std::size_t>(ci) * cout;
                  for (int co = 0; co < cout; ++co) gkc[co] += grow[co] * v;
                }
              }
            }
          }
        }
      }
    });
  }
  return out;
}

DTensor channel_max(Tape& tape, const DTensor& input) {
  if (input.ndim() != 3)
    throw std::invalid_argument("channel_max input must be (H,W,C), got " +
                                shape_to_string(input.shape()));
  const int h = input.extent(0), w = input.extent(1), c = input.extent(2);
  DTensor out = make_output(tape, {h, w, 1}, {&input});
  std::vector<int> argmax(static_cast<std::size_t>(h) * w, 0);
  const double* in = input.data();
  double* o = out.data();
  for (int i = 0; i < h * w; ++i) {
    const double* row = in + static_cast<std::size_t>(i) * c;
    int best = 0;
    double bv = row[0];
    for (int j = 1; j < c; ++j) {
      if (row[j] > bv) {  // ties keep the lowest channel
        bv = row[j];
        best = j;
      }
    }
    o[i] = bv;
    argmax[static_cast<std::size_t>(i)] = best;
  }
  if (want_grad(out)) {
    tape.record(out.raw(), [input, out, argmax = std::move(argmax), h, w, c]() {
      const double* g = out.grad();
      double* gin = input.raw()->grad.data();
      for (int i = 0; i < h * w; ++i)
        gin[static_cast<std::size_t>(i) * c + argmax[static_cast<std::size_t>(i)]] += g[i];
    });
  }
  return out;
}

namespace {

// axis iteration for softmax/sum_axis: element index = outer*extent*inner +
// j*inner + inner_idx
struct AxisSpan {
  std::size_t outer, extent, inner;
};

AxisSpan axis_span(const std::vector<int>& shape, int axis) {
  AxisSpan s{1, static_cast<std::size_t>(shape[static_cast<std::size_t>(axis)]), 1};
  for (int i = 0; i < axis; ++i) s.outer *= static_cast<std::size_t>(shape[static_cast<std::size_t>(i)]);
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i)
    s.inner *= static_cast<std::size_t>(shape[i]);
  return s;
}

}  // namespace

DTensor softmax(Tape& tape, const DTensor& input, int axis) {
  check_axis(input, axis);
  const AxisSpan sp = axis_span(input.shape(), axis);
  DTensor out = make_output(tape, input.shape(), {&input});
  const double* in = input.data();
  double* o = out.data();
  for (std::size_t ou = 0; ou < sp.outer; ++ou) {
    for (std::size_t ii = 0; ii < sp.inner; ++ii) {
      const std::size_t base = ou * sp.extent * sp.inner + ii;
      double m = in[base];
      for (std::size_t j = 1; j < sp.extent; ++j) m = std::max(m, in[base + j * sp.inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < sp.extent; ++j) {
        const double e = std::exp(in[base + j * sp.inner] - m);
        o[base + j * sp.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < sp.extent; ++j) o[base + j * sp.inner] /= total;
    }
  }
  if (want_grad(out)) {
    tape.record(out.raw(), [input, out, sp]() {
      const double* y = out.data();
      const double* g = out.grad();
      double* gin = input.raw()->grad.data();
      for (std::size_t ou = 0; ou < sp.outer; ++ou) {
        for (std::size_t ii = 0; ii < sp.inner; ++ii) {
          const std::size_t base = ou * sp.extent * sp.inner + ii;
          double dot = 0.0;
          for (std::size_t j = 0; j < sp.extent; ++j) {
            const std::size_t ix = base + j * sp.inner;
            dot += g[ix] * y[ix];
          }
          for (std::size_t j = 0; j < sp.extent; ++j) {
            const std::size_t ix = base + j * sp.inner;
            gin[ix] += y[ix] * (g[ix] - dot);
          }
        }
      }
    });
  }
  return out;
}

DTensor one_hot(const std::vector<int>& indices, int h, int w, int depth) {
  if (static_cast<std::size_t>(h) * w != indices.size())
    throw std::invalid_argument("one_hot: index image size mismatch");
  DTensor out({h, w, depth});
  double* o = out.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int v = indices[i];
    if (v < 0 || v >= depth)
      throw std::invalid_argument("one_hot: index " + std::to_string(v) + " out of range [0," +
                                  std::to_string(depth) + ") at cell " + std::to_string(i));
    o[i * depth + v] = 1.0;
  }
  return out;
}

namespace {

enum class Bcast { kSame, kTrailingOne, kScalar };

Bcast broadcast_kind(const DTensor& a, const DTensor& b) {
  if (a.shape() == b.shape()) return Bcast::kSame;
  if (b.numel() == 1) return Bcast::kScalar;
  if (a.ndim() == b.ndim()) {
    bool ok = b.extent(b.ndim() - 1) == 1;
    for (int i = 0; ok && i + 1 < a.ndim(); ++i) ok = a.extent(i) == b.extent(i);
    if (ok) return Bcast::kTrailingOne;
  }
  throw std::invalid_argument("incompatible shapes " + shape_to_string(a.shape()) + " and " +
                              shape_to_string(b.shape()));
}

template <typename Fwd, typename Bwd>
DTensor elementwise_binary(Tape& tape, const DTensor& a, const DTensor& b, Fwd fwd, Bwd bwd) {
  const Bcast kind = broadcast_kind(a, b);
  DTensor out = make_output(tape, a.shape(), {&a, &b});
  const double* pa = a.data();
  const double* pb = b.data();
  double* o = out.data();
  const std::size_t n = a.numel();
  const std::size_t last =
      kind == Bcast::kSame ? 0 : static_cast<std::size_t>(a.extent(a.ndim() - 1));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t bi = kind == Bcast::kSame ? i : (kind == Bcast::kScalar ? 0 : i / last);
    o[i] = fwd(pa[i], pb[bi]);
  }
  if (want_grad(out)) {
    tape.record(out.raw(), [a, b, out, kind, last, n, bwd]() {
      const double* g = out.grad();
      const double* pa = a.data();
      const double* pb = b.data();
      double* ga = a.requires_grad() ? a.raw()->grad.data() : nullptr;
      double* gb = b.requires_grad() ? b.raw()->grad.data() : nullptr;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t bi = kind == Bcast::kSame ? i : (kind == Bcast::kScalar ? 0 : i / last);
        bwd(g[i], pa[i], pb[bi], ga ? ga + i : nullptr, gb ? gb + bi : nullptr);
      }
    });
  }
  return out;
}

}  // namespace

DTensor mul(Tape& tape, const DTensor& a, const DTensor& b) {
  return elementwise_binary(
      tape, a, b, [](double x, double y) { return x * y; },
      [](double g, double x, double y, double* ga, double* gb) {
        if (ga) *ga += g * y;
        if (gb) *gb += g * x;
      });
}

DTensor add(Tape& tape, const DTensor& a, const DTensor& b) {
  return elementwise_binary(
      tape, a, b, [](double x, double y) { return x + y; },
      [](double g, double, double, double* ga, double* gb) {
        if (ga) *ga += g;
        if (gb) *gb += g;
      });
}

DTensor scale(Tape& tape, const DTensor& a, double factor) {
  DTensor out = make_output(tape, a.shape(), {&a});
  const double* pa = a.data();
  double* o = out.data();
  for (std::size_t i = 0; i < a.numel(); ++i) o[i] = pa[i] * factor;
  if (want_grad(out)) {
    tape.record(out.raw(), [a, out, factor]() {
      const double* g = out.grad();
      double* ga = a.raw()->grad.data();
      for (std::size_t i = 0; i < a.numel(); ++i) ga[i] += g[i] * factor;
    });
  }
  return out;
}

DTensor relu(Tape& tape, const DTensor& a) {
  DTensor out = make_output(tape, a.shape(), {&a});
  const double* pa = a.data();
  double* o = out.data();
  for (std::size_t i = 0; i < a.numel(); ++i) o[i] = pa[i] > 0.0 ? pa[i] : 0.0;
  if (want_grad(out)) {
    tape.record(out.raw(), [a, out]() {
      const double* g = out.grad();
      const double* pa = a.data();
      double* ga = a.raw()->grad.data();
      for (std::size_t i = 0; i < a.numel(); ++i)
        if (pa[i] > 0.0) ga[i] += g[i];
    });
  }
  return out;
}

DTensor sum_axis(Tape& tape, const DTensor& a, int axis) {
  check_axis(a, axis);
  const AxisSpan sp = axis_span(a.shape(), axis);
  std::vector<int> oshape;
  for (int i = 0; i < a.ndim(); ++i)
    if (i != axis) oshape.push_back(a.extent(i));
  if (oshape.empty()) oshape.push_back(1);
  DTensor out = make_output(tape, std::move(oshape), {&a});
  const double* pa = a.data();
  double* o = out.data();
  for (std::size_t ou = 0; ou < sp.outer; ++ou) {
    for (std::size_t ii = 0; ii < sp.inner; ++ii) {
      double acc = 0.0;  // fixed left-to-right order
      const std::size_t base = ou * sp.extent * sp.inner + ii;
      for (std::size_t j = 0; j < sp.extent; ++j) acc += pa[base + j * sp.inner];
      o[ou * sp.inner + ii] = acc;
    }
  }
  if (want_grad(out)) {
    tape.record(out.raw(), [a, out, sp]() {
      const double* g = out.grad();
      double* ga = a.raw()->grad.data();
      for (std::size_t ou = 0; ou < sp.outer; ++ou) {
        for (std::size_t ii = 0; ii < sp.inner; ++ii) {
          const double gv = g[ou * sp.inner + ii];
          const std::size_t base = ou * sp.extent * sp.inner + ii;
          for (std::size_t j = 0; j < sp.extent; ++j) ga[base + j * sp.inner] += gv;
        }
      }
    });
  }
  return out;
}

DTensor sum_all(Tape& tape, const DTensor& a) {
  DTensor out = make_output(tape, {1}, {&a});
  const double* pa = a.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) acc += pa[i];
  out.data()[0] = acc;
  if (want_grad(out)) {
    tape.record(out.raw(), [a, out]() {
      const double g = out.grad()[0];
      double* ga = a.raw()->grad.data();
      for (std::size_t i = 0; i < a.numel(); ++i) ga[i] += g;
    });
  }
  return out;
}

DTensor normalize_sum(Tape& tape, const DTensor& a) {
  const double* pa = a.data();
  double total = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) total += pa[i];
  if (!(std::abs(total) > 0.0) || !std::isfinite(total))
    throw std::domain_error("normalize_sum: total mass is " + std::to_string(total));
  DTensor out = make_output(tape, a.shape(), {&a});
  double* o = out.data();
  for (std::size_t i = 0; i < a.numel(); ++i) o[i] = pa[i] / total;
  if (want_grad(out)) {
    tape.record(out.raw(), [a, out, total]() {
      const double* g = out.grad();
      const double* y = out.data();
      double* ga = a.raw()->grad.data();
      double dot = 0.0;
      for (std::size_t i = 0; i < out.numel(); ++i) dot += g[i] * y[i];
      for (std::size_t i = 0; i < out.numel(); ++i) ga[i] += (g[i] - dot) / total;
    });
  }
  return out;
}

DTensor reshape(Tape& tape, const DTensor& a, std::vector<int> shape) {
  const std::size_t n = shape_numel(shape);
  if (n != a.numel())
    throw std::invalid_argument("reshape from " + shape_to_string(a.shape()) + " to " +
                                shape_to_string(shape) + " changes element count");
  DTensor out = make_output(tape, std::move(shape), {&a});
  std::copy(a.data(), a.data() + n, out.data());
  if (want_grad(out)) {
    tape.record(out.raw(), [a, out, n]() {
      const double* g = out.grad();
      double* ga = a.raw()->grad.data();
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
    });
  }
  return out;
}

DTensor flip_spatial(Tape& tape, const DTensor& kernel) {
  if (kernel.ndim() != 4)
    throw std::invalid_argument("flip_spatial expects (k,k,Cin,Cout), got " +
                                shape_to_string(kernel.shape()));
  const int k = kernel.extent(0), k2 = kernel.extent(1);
  const std::size_t ch = static_cast<std::size_t>(kernel.extent(2)) * kernel.extent(3);
  DTensor out = make_output(tape, kernel.shape(), {&kernel});
  const double* pa = kernel.data();
  double* o = out.data();
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k2; ++j) {
      const double* src = pa + (static_cast<std::size_t>(k - 1 - i) * k2 + (k2 - 1 - j)) * ch;
      double* dst = o + (static_cast<std::size_t>(i) * k2 + j) * ch;
      std::copy(src, src + ch, dst);
    }
  if (want_grad(out)) {
    tape.record(out.raw(), [kernel, out, k, k2, ch]() {
      const double* g = out.grad();
      double* ga = kernel.raw()->grad.data();
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k2; ++j) {
          double* dst = ga + (static_cast<std::size_t>(k - 1 - i) * k2 + (k2 - 1 - j)) * ch;
          const double* src = g + (static_cast<std::size_t>(i) * k2 + j) * ch;
          for (std::size_t c = 0; c < ch; ++c) dst[c] += src[c];
        }
    });
  }
  return out;
}

DTensor cross_entropy(Tape& tape, const DTensor& logits, int target) {
  if (logits.ndim() != 1)
    throw std::invalid_argument("cross_entropy logits must be 1-axis, got " +
                                shape_to_string(logits.shape()));
  const int n = logits.extent(0);
  if (target < 0 || target >= n)
    throw std::invalid_argument("cross_entropy target " + std::to_string(target) +
                                " out of range [0," + std::to_string(n) + ")");
  const double* l = logits.data();
  double m = l[0];
  for (int i = 1; i < n; ++i) m = std::max(m, l[i]);
  double total = 0.0;
  std::vector<double> p(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    p[static_cast<std::size_t>(i)] = std::exp(l[i] - m);
    total += p[static_cast<std::size_t>(i)];
  }
  for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] /= total;
  DTensor out = make_output(tape, {1}, {&logits});
  out.data()[0] = -(l[target] - m - std::log(total));
  if (want_grad(out)) {
    tape.record(out.raw(), [logits, out, p = std::move(p), target, n]() {
      const double g = out.grad()[0];
      double* ga = logits.raw()->grad.data();
      for (int i = 0; i < n; ++i)
        ga[i] += g * (p[static_cast<std::size_t>(i)] - (i == target ? 1.0 : 0.0));
    });
  }
  return out;
}

double grad_check(const TensorFn& f, const DTensor& x, double eps) {
  // fixed projection of the output so misrouted adjoints cannot cancel
  DTensor probe = x.clone();
  probe.set_requires_grad(true);
  probe.zero_grad();  // the clone inherits any accumulated gradient
  Tape tape;
  DTensor y = f(tape, probe);
  Rng wrng(0x9d2c5680u);
  std::vector<double> w(y.numel());
  for (double& v : w) v = wrng.uniform() * 2.0 - 1.0;

  DTensor wt = DTensor::from_vector(y.shape(), w);
  DTensor loss = sum_all(tape, mul(tape, y, wt));
  tape.backward(loss);
  std::vector<double> analytic(probe.grad(), probe.grad() + probe.numel());

  auto eval = [&](const DTensor& xv) {
    Tape t(false);
    DTensor yv = f(t, xv);
    if (yv.numel() != w.size()) throw std::logic_error("grad_check: output size changed");
    const double* py = yv.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) acc += py[i] * w[i];
    return acc;
  };

  DTensor xv = x.clone();
  double worst = 0.0;
  for (std::size_t i = 0; i < xv.numel(); ++i) {
    const double saved = xv.data()[i];
    xv.data()[i] = saved + eps;
    const double lp = eval(xv);
    xv.data()[i] = saved - eps;
    const double lm = eval(xv);
    xv.data()[i] = saved;
    const double numeric = (lp - lm) / (2.0 * eps);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace transnet
