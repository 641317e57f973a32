#include "lcg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lcg {

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, requires_grad});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (&in.tape() != this) throw std::logic_error("tape: input recorded on another tape");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
  const Tensor& lv = value(loss);
  if (lv.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " + shape_str(lv.shape()));
  }
  grads_.assign(nodes_.size(), Tensor());
  grads_[loss.id()] = Tensor(lv.shape(), 1.0);

  std::vector<const Tensor*> in_values;
  std::vector<Tensor> in_grads;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (grads_[i].empty() || !node.backward) continue;
    in_values.clear();
    in_grads.clear();
    for (std::size_t id : node.inputs) {
      in_values.push_back(&nodes_[id].value);
      in_grads.emplace_back(nodes_[id].requires_grad ? Tensor(nodes_[id].value.shape())
                                                     : Tensor());
    }
    node.backward(BackwardArgs{in_values, node.value, grads_[i], in_grads});
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      if (in_grads[k].empty()) continue;
      Tensor& acc = grads_[node.inputs[k]];
      if (acc.empty()) {
        acc = std::move(in_grads[k]);
      } else {
        auto dst = acc.data();
        auto src = in_grads[k].data();
        for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += src[e];
      }
    }
    // Interior gradients are no longer needed once propagated.
    if (!node.inputs.empty()) grads_[i] = Tensor();
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (grads_[i].empty() && nodes_[i].inputs.empty() && nodes_[i].requires_grad) {
      grads_[i] = Tensor(nodes_[i].value.shape());
    }
  }
}

const Tensor& Tape::grad(Var v) const {
  if (v.id() >= grads_.size() || grads_[v.id()].empty()) {
    throw std::logic_error("tape: no gradient recorded for node " + std::to_string(v.id()));
  }
  return grads_[v.id()];
}

namespace {

template <class Fn>
Tensor map_unary(const Tensor& a, Fn&& fn) {
  Tensor out(a.shape());
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = fn(src[i]);
  return out;
}

template <class Fn>
Tensor map_binary(const Tensor& a, const Tensor& b, std::string_view op, Fn&& fn) {
  if (a.shape() == b.shape()) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = fn(a[i], b[i]);
    return out;
  }
  const Shape shape = broadcast_shapes(a.shape(), b.shape(), op);
  const Tensor ea = broadcast_to(a, shape);
  const Tensor eb = broadcast_to(b, shape);
  Tensor out(shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(ea[i], eb[i]);
  return out;
}

void accumulate(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var add(Var a, Var b) {
  Tensor out = map_binary(a.value(), b.value(), "add", std::plus<>());
  return a.tape().record(std::move(out), {a, b}, [](const BackwardArgs& g) {
    if (!g.grad_in[0].empty()) accumulate(g.grad_in[0], reduce_to_shape(g.grad_out, g.grad_in[0].shape()));
    if (!g.grad_in[1].empty()) accumulate(g.grad_in[1], reduce_to_shape(g.grad_out, g.grad_in[1].shape()));
  });
}

Var sub(Var a, Var b) {
  Tensor out = map_binary(a.value(), b.value(), "sub", std::minus<>());
  return a.tape().record(std::move(out), {a, b}, [](const BackwardArgs& g) {
    if (!g.grad_in[0].empty()) accumulate(g.grad_in[0], reduce_to_shape(g.grad_out, g.grad_in[0].shape()));
    if (!g.grad_in[1].empty()) {
      const Tensor r = reduce_to_shape(g.grad_out, g.grad_in[1].shape());
      for (std::size_t i = 0; i < r.size(); ++i) g.grad_in[1][i] -= r[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tensor out = map_binary(a.value(), b.value(), "mul", std::multiplies<>());
  return a.tape().record(std::move(out), {a, b}, [](const BackwardArgs& g) {
    const Tensor& av = *g.inputs[0];
    const Tensor& bv = *g.inputs[1];
    if (!g.grad_in[0].empty()) {
      Tensor t = map_binary(g.grad_out, bv, "mul", std::multiplies<>());
      accumulate(g.grad_in[0], reduce_to_shape(t, av.shape()));
    }
    if (!g.grad_in[1].empty()) {
      Tensor t = map_binary(g.grad_out, av, "mul", std::multiplies<>());
      accumulate(g.grad_in[1], reduce_to_shape(t, bv.shape()));
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = map_unary(a.value(), [factor](double x) { return x * factor; });
  return a.tape().record(std::move(out), {a}, [factor](const BackwardArgs& g) {
    for (std::size_t i = 0; i < g.grad_out.size(); ++i) g.grad_in[0][i] += factor * g.grad_out[i];
  });
}

Var add_scalar(Var a, double value) {
  Tensor out = map_unary(a.value(), [value](double x) { return x + value; });
  return a.tape().record(std::move(out), {a}, [](const BackwardArgs& g) {
    accumulate(g.grad_in[0], g.grad_out);
  });
}

Var pow(Var a, double exponent) {
  Tensor out = map_unary(a.value(), [exponent](double x) { return std::pow(x, exponent); });
  return a.tape().record(std::move(out), {a}, [exponent](const BackwardArgs& g) {
    const Tensor& x = *g.inputs[0];
    for (std::size_t i = 0; i < x.size(); ++i) {
      g.grad_in[0][i] += g.grad_out[i] * exponent * std::pow(x[i], exponent - 1.0);
    }
  });
}

Var sigmoid(Var a) {
  Tensor out = map_unary(a.value(), sigmoid_value);
  return a.tape().record(std::move(out), {a}, [](const BackwardArgs& g) {
    for (std::size_t i = 0; i < g.output.size(); ++i) {
      const double s = g.output[i];
      g.grad_in[0][i] += g.grad_out[i] * s * (1.0 - s);
    }
  });
}

Var swish(Var a) {
  Tensor out = map_unary(a.value(), [](double x) { return x * sigmoid_value(x); });
  return a.tape().record(std::move(out), {a}, [](const BackwardArgs& g) {
    const Tensor& x = *g.inputs[0];
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double s = sigmoid_value(x[i]);
      g.grad_in[0][i] += g.grad_out[i] * (s + x[i] * s * (1.0 - s));
    }
  });
}

Var matmul(Var a, Var b) {
  Tensor out = matmul(a.value(), b.value());
  return a.tape().record(std::move(out), {a, b}, [](const BackwardArgs& g) {
    if (!g.grad_in[0].empty()) accumulate(g.grad_in[0], matmul(g.grad_out, *g.inputs[1], false, true));
    if (!g.grad_in[1].empty()) accumulate(g.grad_in[1], matmul(*g.inputs[0], g.grad_out, true, false));
  });
}

Var transpose(Var a) {
  Tensor out = transpose(a.value());
  return a.tape().record(std::move(out), {a}, [](const BackwardArgs& g) {
    accumulate(g.grad_in[0], transpose(g.grad_out));
  });
}

Var softmax(Var a) {
  const Tensor& x = a.value();
  if (x.rank() == 0) throw ShapeError("softmax: expected rank >= 1, got " + shape_str(x.shape()));
  Tensor out(x.shape());
  const std::size_t n = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double* row = x.data().data() + r * n;
    double* dst = out.data().data() + r * n;
    const double m = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += dst[j] = std::exp(row[j] - m);
    for (std::size_t j = 0; j < n; ++j) dst[j] /= z;
  }
  return a.tape().record(std::move(out), {a}, [n](const BackwardArgs& g) {
    const Tensor& y = g.output;
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g.grad_out[r * n + j] * y[r * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        g.grad_in[0][r * n + j] += y[r * n + j] * (g.grad_out[r * n + j] - dot);
      }
    }
  });
}

Var layer_norm(Var a, double eps) {
  const Tensor& x = a.value();
  if (x.rank() == 0) throw ShapeError("layer_norm: expected rank >= 1, got " + shape_str(x.shape()));
  const std::size_t n = x.cols();
  const std::size_t rows = x.rows();
  Tensor out(x.shape());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x.data().data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = (row[j] - mu) * inv_std[r];
  }
  return a.tape().record(std::move(out), {a},
                         [n, rows, inv_std = std::move(inv_std)](const BackwardArgs& g) {
    const Tensor& y = g.output;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t r = 0; r < rows; ++r) {
      double mg = 0.0, mgy = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        mg += g.grad_out[r * n + j];
        mgy += g.grad_out[r * n + j] * y[r * n + j];
      }
      mg *= inv_n;
      mgy *= inv_n;
      for (std::size_t j = 0; j < n; ++j) {
        g.grad_in[0][r * n + j] +=
            inv_std[r] * (g.grad_out[r * n + j] - mg - y[r * n + j] * mgy);
      }
    }
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape().record(Tensor::scalar(s), {a}, [](const BackwardArgs& g) {
    const double go = g.grad_out[0];
    for (std::size_t i = 0; i < g.grad_in[0].size(); ++i) g.grad_in[0][i] += go;
  });
}

Var mean(Var a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var mean_square(Var a) {
  const Tensor& x = a.value();
  double s = 0.0;
  for (double v : x.data()) s += v * v;
  const double inv_n = 1.0 / static_cast<double>(x.size());
  return a.tape().record(Tensor::scalar(s * inv_n), {a}, [inv_n](const BackwardArgs& g) {
    const Tensor& x = *g.inputs[0];
    const double go = g.grad_out[0];
    for (std::size_t i = 0; i < x.size(); ++i) g.grad_in[0][i] += 2.0 * inv_n * go * x[i];
  });
}

Var broadcast_to(Var a, const Shape& shape) {
  Tensor out = broadcast_to(a.value(), shape);
  return a.tape().record(std::move(out), {a}, [](const BackwardArgs& g) {
    accumulate(g.grad_in[0], reduce_to_shape(g.grad_out, g.grad_in[0].shape()));
  });
}

Var reshape(Var a, const Shape& shape) {
  Tensor out = a.value().reshaped(shape);
  return a.tape().record(std::move(out), {a}, [](const BackwardArgs& g) {
    accumulate(g.grad_in[0], g.grad_out);
  });
}

Var gather(Var a, std::vector<std::size_t> index, const Shape& shape) {
  if (shape_size(shape) != index.size()) {
    throw ShapeError("gather: index count " + std::to_string(index.size()) +
                     " does not fill " + shape_str(shape));
  }
  const Tensor& x = a.value();
  Tensor out(shape);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= x.size()) throw std::out_of_range("gather: index out of range");
    out[i] = x[index[i]];
  }
  return a.tape().record(std::move(out), {a}, [index = std::move(index)](const BackwardArgs& g) {
    for (std::size_t i = 0; i < index.size(); ++i) g.grad_in[0][index[i]] += g.grad_out[i];
  });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  const Tensor& x = a.value();
  if (x.rank() != 2) throw ShapeError("gather_rows: expected rank 2, got " + shape_str(x.shape()));
  const std::size_t n = x.dim(1);
  std::vector<std::size_t> index;
  index.reserve(rows.size() * n);
  for (std::size_t r : rows) {
    if (r >= x.dim(0)) throw std::out_of_range("gather_rows: row out of range");
    for (std::size_t j = 0; j < n; ++j) index.push_back(r * n + j);
  }
  return gather(a, std::move(index), {rows.size(), n});
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts[0].value().dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    if (v.rank() != 2 || v.dim(0) != rows) throw_shape_error("concat_cols", parts[0].shape(), v.shape());
    widths.push_back(v.dim(1));
    total += v.dim(1);
  }
  Tensor out({rows, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < widths[k]; ++j) out[r * total + offset + j] = v[r * widths[k] + j];
    offset += widths[k];
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape().record(std::move(out), std::move(inputs),
                                [rows, total, widths](const BackwardArgs& g) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (!g.grad_in[k].empty()) {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < widths[k]; ++j)
            g.grad_in[k][r * widths[k] + j] += g.grad_out[r * total + offset + j];
      }
      offset += widths[k];
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = parts[0].value().dim(1);
  std::vector<double> data;
  std::size_t rows = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    if (v.rank() != 2 || v.dim(1) != cols) throw_shape_error("concat_rows", parts[0].shape(), v.shape());
    data.insert(data.end(), v.data().begin(), v.data().end());
    rows += v.dim(0);
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape().record(Tensor({rows, cols}, std::move(data)), std::move(inputs),
                                [](const BackwardArgs& g) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < g.inputs.size(); ++k) {
      const std::size_t n = g.inputs[k]->size();
      if (!g.grad_in[k].empty()) {
        for (std::size_t i = 0; i < n; ++i) g.grad_in[k][i] += g.grad_out[offset + i];
      }
      offset += n;
    }
  });
}

}  // namespace lcg
