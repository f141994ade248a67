#include "sampm/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sampm::ad {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMatrix>;
using Map = Eigen::Map<RowMatrix>;

MapC as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return MapC(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
Map as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return Map(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

Tape& tape_of(std::initializer_list<Var> vars) {
  Tape* tape = nullptr;
  for (const Var& v : vars) {
    if (!v.valid()) throw std::invalid_argument("operation on an unbound Var");
    if (tape && v.tape() != tape) throw std::invalid_argument("operands recorded on different tapes");
    tape = v.tape();
  }
  return *tape;
}

void require_rank(const Var& v, std::size_t rank, const char* op) {
  if (v.shape().size() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(v.shape()));
  }
}

std::size_t last_dim(const Shape& s) { return s.back(); }

// Elementwise binary op with identical shapes or a one-element operand.
Shape broadcast_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() == b.shape()) return a.shape();
  if (b.numel() == 1) return a.shape();
  if (a.numel() == 1) return b.shape();
  throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                       " are not broadcast-compatible");
}

inline double at_bc(const Tensor& t, std::size_t i) { return t.numel() == 1 ? t[0] : t[i]; }

void accumulate_bc(Tensor* sink, const Tensor& contribution) {
  if (!sink) return;
  if (sink->numel() == 1 && contribution.numel() != 1) {
    (*sink)[0] += contribution.sum();
    return;
  }
  auto dst = sink->data();
  auto src = contribution.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <class Fwd, class Deriv>
Var unary(Var x, const char* op, Fwd fwd, Deriv deriv) {
  Tape& tape = tape_of({x});
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = fwd(xv[i]);
  return tape.record(op, std::move(out), {x}, [x, deriv](Tape& t, const Tensor& g) {
    Tensor* sink = t.grad_sink(x);
    if (!sink) return;
    const Tensor& xv = x.value();
    for (std::size_t i = 0; i < g.numel(); ++i) (*sink)[i] += g[i] * deriv(xv[i]);
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// Var / Tape

const Tensor& Var::value() const {
  if (!tape_) throw std::invalid_argument("value() of an unbound Var");
  return tape_->value(id_);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

Tensor Var::grad() const {
  if (!tape_) throw std::invalid_argument("grad() of an unbound Var");
  return tape_->grad(id_);
}

void Tape::check_owned(Var v) const {
  if (v.tape() != this) throw std::invalid_argument("Var belongs to a different tape");
}

Var Tape::constant(Tensor value) { return leaf(std::move(value), false); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  if (!value.all_finite()) throw NumericError("leaf tensor contains non-finite values");
  nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, "leaf", nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::record(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  if (!value.all_finite()) throw NumericError(std::string(op) + " produced non-finite values");
  bool needs = false;
  for (const Var& v : inputs) {
    check_owned(v);
    needs = needs || v.requires_grad();
  }
  nodes_.push_back(Node{std::move(value), Tensor{}, needs, std::string(op), needs ? std::move(backward) : nullptr});
  return Var(this, nodes_.size() - 1);
}

Tensor* Tape::grad_sink(Var v) {
  check_owned(v);
  Node& node = nodes_[v.id()];
  if (!node.requires_grad) return nullptr;
  if (node.grad.empty()) node.grad = Tensor(node.value.shape(), 0.0);
  return &node.grad;
}

Tensor Tape::grad(std::size_t id) const {
  const Node& node = nodes_.at(id);
  if (node.grad.empty()) return Tensor(node.value.shape(), 0.0);
  return node.grad;
}

std::size_t Tape::backward(Var root) {
  check_owned(root);
  if (backward_done_) throw std::logic_error("backward called twice on the same tape");
  if (root.numel() != 1) throw DimensionError("backward root must be a one-element tensor, got " + shape_str(root.shape()));
  backward_done_ = true;
  Tensor* seed = grad_sink(root);
  if (!seed) return 0;
  (*seed)[0] = 1.0;
  std::size_t visited = 0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.backward || node.grad.empty()) continue;
    node.backward(*this, node.grad);
    ++visited;
  }
  return visited;
}

// ---------------------------------------------------------------------------
// Linear algebra

Var matmul(Var a, Var b) {
  Tape& tape = tape_of({a, b});
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor out({m, n});
  as_matrix(out, m, n).noalias() = as_matrix(a.value(), m, k) * as_matrix(b.value(), k, n);
  return tape.record("matmul", std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const Tensor& g) {
    auto gm = as_matrix(g, m, n);
    if (Tensor* ga = t.grad_sink(a)) as_matrix(*ga, m, k).noalias() += gm * as_matrix(b.value(), k, n).transpose();
    if (Tensor* gb = t.grad_sink(b)) as_matrix(*gb, k, n).noalias() += as_matrix(a.value(), m, k).transpose() * gm;
  });
}

Var transpose(Var a) {
  Tape& tape = tape_of({a});
  require_rank(a, 2, "transpose");
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  Tensor out({c, r});
  as_matrix(out, c, r) = as_matrix(a.value(), r, c).transpose();
  return tape.record("transpose", std::move(out), {a}, [a, r, c](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_sink(a)) as_matrix(*ga, r, c) += as_matrix(g, c, r).transpose();
  });
}

Var reshape(Var a, Shape shape) {
  Tape& tape = tape_of({a});
  Tensor out = a.value().reshaped(std::move(shape));
  return tape.record("reshape", std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_sink(a)) {
      auto dst = ga->data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
    }
  });
}

Var linear(Var x, Var weight, Var bias) {
  Tape& tape = tape_of({x, weight, bias});
  require_rank(weight, 2, "linear");
  const std::size_t din = weight.shape()[0], dout = weight.shape()[1];
  if (last_dim(x.shape()) != din) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " does not match weight " + shape_str(weight.shape()));
  }
  if (bias.shape() != Shape{dout}) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " does not match weight " + shape_str(weight.shape()));
  }
  const std::size_t rows = x.numel() / din;
  Shape out_shape = x.shape();
  out_shape.back() = dout;
  Tensor out(out_shape);
  auto om = as_matrix(out, rows, dout);
  om.noalias() = as_matrix(x.value(), rows, din) * as_matrix(weight.value(), din, dout);
  om.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.value().data().data(), static_cast<Eigen::Index>(dout));
  return tape.record("linear", std::move(out), {x, weight, bias},
                     [x, weight, bias, rows, din, dout](Tape& t, const Tensor& g) {
                       auto gm = as_matrix(g, rows, dout);
                       if (Tensor* gx = t.grad_sink(x))
                         as_matrix(*gx, rows, din).noalias() += gm * as_matrix(weight.value(), din, dout).transpose();
                       if (Tensor* gw = t.grad_sink(weight))
                         as_matrix(*gw, din, dout).noalias() += as_matrix(x.value(), rows, din).transpose() * gm;
                       if (Tensor* gb = t.grad_sink(bias)) as_matrix(*gb, 1, dout) += gm.colwise().sum();
                     });
}

Var concat(std::initializer_list<Var> xs, std::size_t axis) {
  return concat(std::span<const Var>(xs.begin(), xs.size()), axis);
}

Var concat(std::span<const Var> xs, std::size_t axis) {
  if (xs.empty()) throw DimensionError("concat of zero tensors");
  Tape* tape = xs[0].tape();
  const Shape& ref = xs[0].shape();
  if (axis >= ref.size()) throw DimensionError("concat axis " + std::to_string(axis) + " out of range for " + shape_str(ref));
  std::size_t total = 0;
  for (const Var& v : xs) {
    if (v.tape() != tape) throw std::invalid_argument("concat operands recorded on different tapes");
    const Shape& s = v.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == ref[d];
    if (!ok) throw DimensionError("concat: incompatible shapes " + shape_str(ref) + " and " + shape_str(s));
    total += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= ref[d];
  for (std::size_t d = axis + 1; d < ref.size(); ++d) inner *= ref[d];
  Shape out_shape = ref;
  out_shape[axis] = total;
  Tensor out(out_shape);
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const Var& v : xs) {
    const std::size_t w = v.shape()[axis] * inner;
    const Tensor& src = v.value();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.data().begin() + static_cast<std::ptrdiff_t>(o * w), w,
                  out.data().begin() + static_cast<std::ptrdiff_t>(o * total * inner + offset));
    }
    widths.push_back(w);
    offset += w;
  }
  std::vector<Var> inputs(xs.begin(), xs.end());
  return tape->record("concat", std::move(out), xs,
                      [inputs, widths, outer, stride = total * inner](Tape& t, const Tensor& g) {
                        std::size_t off = 0;
                        for (std::size_t k = 0; k < inputs.size(); ++k) {
                          const std::size_t w = widths[k];
                          if (Tensor* gi = t.grad_sink(inputs[k])) {
                            for (std::size_t o = 0; o < outer; ++o)
                              for (std::size_t j = 0; j < w; ++j) (*gi)[o * w + j] += g[o * stride + off + j];
                          }
                          off += w;
                        }
                      });
}

// ---------------------------------------------------------------------------
// Normalisation

Var softmax_rows(Var x) {
  Tape& tape = tape_of({x});
  const std::size_t c = last_dim(x.shape());
  const std::size_t r = x.numel() / c;
  const Tensor& xv = x.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < r; ++i) {
    const double* in = xv.data().data() + i * c;
    double* o = out.data().data() + i * c;
    const double mx = *std::max_element(in, in + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += (o[j] = std::exp(in[j] - mx));
    const double inv = 1.0 / s;
    for (std::size_t j = 0; j < c; ++j) o[j] *= inv;
  }
  Tensor y = out;
  return tape.record("softmax_rows", std::move(out), {x}, [x, y = std::move(y), r, c](Tape& t, const Tensor& g) {
    Tensor* gx = t.grad_sink(x);
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
      for (std::size_t j = 0; j < c; ++j) (*gx)[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& tape = tape_of({x, gain, bias});
  if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be positive");
  const std::size_t d = last_dim(x.shape());
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw DimensionError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                         " do not match last axis of " + shape_str(x.shape()));
  }
  const std::size_t r = x.numel() / d;
  const Tensor& xv = x.value();
  Tensor xhat(x.shape());
  std::vector<double> inv_std(r);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < r; ++i) {
    const double* in = xv.data().data() + i * d;
    double m = 0.0;
    for (std::size_t j = 0; j < d; ++j) m += in[j];
    m /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - m) * (in[j] - m);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (in[j] - m) * inv_std[i];
      xhat[i * d + j] = h;
      out[i * d + j] = h * gain.value()[j] + bias.value()[j];
    }
  }
  return tape.record("layer_norm", std::move(out), {x, gain, bias},
                     [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std), r, d](Tape& t, const Tensor& g) {
                       Tensor* gx = t.grad_sink(x);
                       Tensor* gg = t.grad_sink(gain);
                       Tensor* gb = t.grad_sink(bias);
                       const Tensor& gv = gain.value();
                       std::vector<double> dh(d);
                       for (std::size_t i = 0; i < r; ++i) {
                         double mean_dh = 0.0, mean_dh_h = 0.0;
                         for (std::size_t j = 0; j < d; ++j) {
                           const double gij = g[i * d + j];
                           const double h = xhat[i * d + j];
                           if (gg) (*gg)[j] += gij * h;
                           if (gb) (*gb)[j] += gij;
                           dh[j] = gij * gv[j];
                           mean_dh += dh[j];
                           mean_dh_h += dh[j] * h;
                         }
                         if (!gx) continue;
                         mean_dh /= static_cast<double>(d);
                         mean_dh_h /= static_cast<double>(d);
                         for (std::size_t j = 0; j < d; ++j)
                           (*gx)[i * d + j] += inv_std[i] * (dh[j] - mean_dh - xhat[i * d + j] * mean_dh_h);
                       }
                     });
}

// ---------------------------------------------------------------------------
// Elementwise

Var add(Var a, Var b) {
  Tape& tape = tape_of({a, b});
  Tensor out(broadcast_shape(a, b, "add"));
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = at_bc(a.value(), i) + at_bc(b.value(), i);
  return tape.record("add", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    accumulate_bc(t.grad_sink(a), g);
    accumulate_bc(t.grad_sink(b), g);
  });
}

Var sub(Var a, Var b) {
  Tape& tape = tape_of({a, b});
  Tensor out(broadcast_shape(a, b, "sub"));
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = at_bc(a.value(), i) - at_bc(b.value(), i);
  return tape.record("sub", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    accumulate_bc(t.grad_sink(a), g);
    if (Tensor* gb = t.grad_sink(b)) {
      Tensor neg = g;
      for (double& v : neg.data()) v = -v;
      accumulate_bc(gb, neg);
    }
  });
}

Var mul(Var a, Var b) {
  Tape& tape = tape_of({a, b});
  Tensor out(broadcast_shape(a, b, "mul"));
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = at_bc(a.value(), i) * at_bc(b.value(), i);
  return tape.record("mul", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    for (auto [self, other] : {std::pair{a, b}, std::pair{b, a}}) {
      Tensor* sink = t.grad_sink(self);
      if (!sink) continue;
      Tensor contrib(g.shape());
      for (std::size_t i = 0; i < g.numel(); ++i) contrib[i] = g[i] * at_bc(other.value(), i);
      accumulate_bc(sink, contrib);
    }
  });
}

Var scale(Var x, double s) {
  return unary(x, "scale", [s](double v) { return s * v; }, [s](double) { return s; });
}

Var add_scalar(Var x, double s) {
  return unary(x, "add_scalar", [s](double v) { return v + s; }, [](double) { return 1.0; });
}

Var sigmoid(Var x) {
  auto f = [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); };
  return unary(x, "sigmoid", f, [f](double v) {
    const double s = f(v);
    return s * (1.0 - s);
  });
}

Var gelu(Var x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      x, "gelu", [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [inv_sqrt_2pi](double v) { return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v); });
}

Var relu(Var x) {
  return unary(x, "relu", [](double v) { return v > 0 ? v : 0.0; }, [](double v) { return v > 0 ? 1.0 : 0.0; });
}

Var activation(Var x, Activation act) { return act == Activation::kGelu ? gelu(x) : relu(x); }

Var sum(Var x) {
  Tape& tape = tape_of({x});
  return tape.record("sum", Tensor::scalar(x.value().sum()), {x}, [x](Tape& t, const Tensor& g) {
    if (Tensor* gx = t.grad_sink(x))
      for (double& v : gx->data()) v += g[0];
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Var detach(Var x) { return tape_of({x}).constant(x.value()); }

// ---------------------------------------------------------------------------
// Image/token rearrangements

namespace {

Var gather_op(Var x, Shape out_shape, std::vector<std::size_t> map, const char* op) {
  Tape& tape = tape_of({x});
  if (shape_numel(out_shape) != map.size()) {
    throw DimensionError(std::string(op) + ": index map of " + std::to_string(map.size()) + " entries for shape " +
                         shape_str(out_shape));
  }
  for (std::size_t i : map) {
    if (i >= x.numel()) throw DimensionError(std::string(op) + ": index out of range for " + shape_str(x.shape()));
  }
  Tensor out(out_shape);
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = xv[map[i]];
  return tape.record(op, std::move(out), {x}, [x, map = std::move(map)](Tape& t, const Tensor& g) {
    if (Tensor* gx = t.grad_sink(x))
      for (std::size_t i = 0; i < map.size(); ++i) (*gx)[map[i]] += g[i];
  });
}

struct Taps {
  std::vector<std::size_t> lo, hi;
  std::vector<double> w;  // weight of hi
};

Taps bilinear_taps(std::size_t in, std::size_t factor) {
  Taps taps;
  const std::size_t out = in * factor;
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps.lo.push_back(lo);
    taps.hi.push_back(hi);
    taps.w.push_back(src - static_cast<double>(lo));
  }
  return taps;
}

}  // namespace

Var gather(Var x, Shape out_shape, std::vector<std::size_t> index) {
  return gather_op(x, std::move(out_shape), std::move(index), "gather");
}

Var patchify(Var image, std::size_t patch) {
  require_rank(image, 3, "patchify");
  const std::size_t c = image.shape()[0], h = image.shape()[1], w = image.shape()[2];
  if (patch == 0 || h % patch || w % patch) {
    throw DimensionError("patchify: " + shape_str(image.shape()) + " not divisible by patch " + std::to_string(patch));
  }
  const std::size_t gh = h / patch, gw = w / patch, feat = c * patch * patch;
  std::vector<std::size_t> map(gh * gw * feat);
  for (std::size_t ty = 0; ty < gh; ++ty)
    for (std::size_t tx = 0; tx < gw; ++tx)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t dy = 0; dy < patch; ++dy)
          for (std::size_t dx = 0; dx < patch; ++dx) {
            const std::size_t tok = ty * gw + tx;
            const std::size_t f = (ch * patch + dy) * patch + dx;
            map[tok * feat + f] = (ch * h + ty * patch + dy) * w + tx * patch + dx;
          }
  return gather_op(image, {gh * gw, feat}, std::move(map), "patchify");
}

Var unpatchify(Var tokens, std::size_t grid_h, std::size_t grid_w, std::size_t patch) {
  require_rank(tokens, 2, "unpatchify");
  if (tokens.shape()[0] != grid_h * grid_w || tokens.shape()[1] != patch * patch) {
    throw DimensionError("unpatchify: tokens " + shape_str(tokens.shape()) + " do not match grid " +
                         std::to_string(grid_h) + "x" + std::to_string(grid_w) + " patch " + std::to_string(patch));
  }
  const std::size_t h = grid_h * patch, w = grid_w * patch;
  std::vector<std::size_t> map(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t tok = (y / patch) * grid_w + x / patch;
      map[y * w + x] = tok * patch * patch + (y % patch) * patch + x % patch;
    }
  return gather_op(tokens, {h, w}, std::move(map), "unpatchify");
}

Var avg_pool(Var x, std::size_t k) {
  Tape& tape = tape_of({x});
  require_rank(x, 2, "avg_pool");
  const std::size_t h = x.shape()[0], w = x.shape()[1];
  if (k == 0 || h % k || w % k) throw DimensionError("avg_pool: " + shape_str(x.shape()) + " not divisible by " + std::to_string(k));
  const std::size_t oh = h / k, ow = w / k;
  const double inv = 1.0 / static_cast<double>(k * k);
  Tensor out({oh, ow});
  const Tensor& xv = x.value();
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t xx = 0; xx < w; ++xx) out[(y / k) * ow + xx / k] += xv[y * w + xx] * inv;
  return tape.record("avg_pool", std::move(out), {x}, [x, h, w, k, ow, inv](Tape& t, const Tensor& g) {
    if (Tensor* gx = t.grad_sink(x))
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx) (*gx)[y * w + xx] += g[(y / k) * ow + xx / k] * inv;
  });
}

Var upsample_bilinear(Var x, std::size_t factor) {
  Tape& tape = tape_of({x});
  require_rank(x, 2, "upsample_bilinear");
  if (factor == 0) throw DimensionError("upsample_bilinear: factor must be positive");
  const std::size_t h = x.shape()[0], w = x.shape()[1];
  const std::size_t oh = h * factor, ow = w * factor;
  Taps ty = bilinear_taps(h, factor), tx = bilinear_taps(w, factor);
  Tensor out({oh, ow});
  const Tensor& xv = x.value();
  for (std::size_t y = 0; y < oh; ++y) {
    const double wy = ty.w[y];
    for (std::size_t xx = 0; xx < ow; ++xx) {
      const double wx = tx.w[xx];
      const double top = (1 - wx) * xv[ty.lo[y] * w + tx.lo[xx]] + wx * xv[ty.lo[y] * w + tx.hi[xx]];
      const double bot = (1 - wx) * xv[ty.hi[y] * w + tx.lo[xx]] + wx * xv[ty.hi[y] * w + tx.hi[xx]];
      out[y * ow + xx] = (1 - wy) * top + wy * bot;
    }
  }
  return tape.record("upsample_bilinear", std::move(out), {x},
                     [x, ty = std::move(ty), tx = std::move(tx), w, oh, ow](Tape& t, const Tensor& g) {
                       Tensor* gx = t.grad_sink(x);
                       if (!gx) return;
                       for (std::size_t y = 0; y < oh; ++y) {
                         const double wy = ty.w[y];
                         for (std::size_t xx = 0; xx < ow; ++xx) {
                           const double wx = tx.w[xx];
                           const double gv = g[y * ow + xx];
                           (*gx)[ty.lo[y] * w + tx.lo[xx]] += gv * (1 - wy) * (1 - wx);
                           (*gx)[ty.lo[y] * w + tx.hi[xx]] += gv * (1 - wy) * wx;
                           (*gx)[ty.hi[y] * w + tx.lo[xx]] += gv * wy * (1 - wx);
                           (*gx)[ty.hi[y] * w + tx.hi[xx]] += gv * wy * wx;
                         }
                       }
                     });
}

}  // namespace sampm::ad
