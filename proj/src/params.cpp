#include "lcg/params.hpp"

namespace lcg {

NormWeights<Tensor> make_norm(std::size_t width) {
  return {Tensor({width}, 1.0), Tensor({width}, 0.0)};
}

Var normalize(Var x, const NormWeights<Var>& w, double eps) {
  return add(mul(layer_norm(x, eps), w.gamma), w.beta);
}

Var linear(Var x, Var weight, Var bias) { return add(matmul(x, weight), bias); }

}  // namespace lcg
