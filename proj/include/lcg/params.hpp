#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "lcg/autodiff.hpp"

namespace lcg {

// Parameter structs are templates over the leaf type: `W<Tensor>` holds values,
// `W<Var>` holds the same fields bound to a tape. Each family overloads
// `visit_params(prefix, f, w0, w...)`, calling `f(name, w0.field, w.field...)`
// for every field in a fixed order. Binding, checkpoints and the optimizer are
// all driven by that one enumeration.

template <class X, template <class> class W>
struct is_instance : std::false_type {};
template <class T, template <class> class W>
struct is_instance<W<T>, W> : std::true_type {};
template <class X, template <class> class W>
concept InstanceOf = is_instance<std::remove_cvref_t<X>, W>::value;

/// Resizes every non-const container in `rest` to the size of `first`.
template <class First, class... Rest>
void sync_size(const First& first, Rest&... rest) {
  auto one = [&](auto& r) {
    if constexpr (!std::is_const_v<std::remove_reference_t<decltype(r)>>) {
      r.resize(first.size());
    }
  };
  (one(rest), ...);
  (void)one;
}

template <class T>
struct NormWeights {
  T gamma;
  T beta;
};

template <class F, InstanceOf<NormWeights> W0, class... W>
void visit_params(const std::string& p, F&& f, W0&& w0, W&&... w) {
  f(p + "gamma", w0.gamma, w.gamma...);
  f(p + "beta", w0.beta, w.beta...);
}

template <template <class> class W>
W<Var> bind(Tape& tape, const W<Tensor>& values, bool requires_grad = true) {
  W<Var> vars;
  visit_params(
      "", [&](const std::string&, const Tensor& t, Var& v) { v = tape.leaf(t, requires_grad); },
      values, vars);
  return vars;
}

/// Gradients of the last backward() pass, shaped like the bound parameters.
template <template <class> class W>
W<Tensor> gradients(const Tape& tape, const W<Var>& vars) {
  W<Tensor> out;
  visit_params("", [&](const std::string&, const Var& v, Tensor& g) { g = tape.grad(v); }, vars,
               out);
  return out;
}

template <template <class> class W>
W<Tensor> zeros_like(const W<Tensor>& values) {
  W<Tensor> out;
  visit_params("", [](const std::string&, const Tensor& t, Tensor& z) { z = Tensor(t.shape()); },
               values, out);
  return out;
}

template <template <class> class W>
std::size_t parameter_count(const W<Tensor>& values) {
  std::size_t n = 0;
  visit_params("", [&](const std::string&, const Tensor& t) { n += t.size(); }, values);
  return n;
}

/// Parameter tensors in visit order.
template <template <class> class W>
std::vector<Tensor> flatten(const W<Tensor>& values) {
  std::vector<Tensor> out;
  visit_params("", [&](const std::string&, const Tensor& t) { out.push_back(t); }, values);
  return out;
}

/// Inverse of flatten for tape handles: `vars` must follow the visit order of `like`.
template <template <class> class W>
W<Var> rebind(const W<Tensor>& like, std::span<const Var> vars) {
  W<Var> out;
  std::size_t i = 0;
  visit_params(
      "",
      [&](const std::string& name, const Tensor&, Var& v) {
        if (i >= vars.size()) throw std::invalid_argument("rebind: too few handles at " + name);
        v = vars[i++];
      },
      like, out);
  if (i != vars.size()) throw std::invalid_argument("rebind: too many handles");
  return out;
}

NormWeights<Tensor> make_norm(std::size_t width);

/// Row-wise affine normalization: layer_norm(x) ⊙ gamma + beta.
Var normalize(Var x, const NormWeights<Var>& w, double eps = 1e-5);

/// x·W + b with b broadcast over rows.
Var linear(Var x, Var weight, Var bias);

}  // namespace lcg
