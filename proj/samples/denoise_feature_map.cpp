// Runs the denoiser on a random feature map, then backpropagates a loss
// through it and prints a few gradient norms.

#include <algorithm>
#include <cmath>
#include <iostream>

#include "freqdeno/freqdeno.hpp"

int main() {
  using namespace freqdeno;

  DenoConfig config;  // stride 8, both branches, token exchange, decoupled + aligned phase
  const DenoModule module(config, /*seed=*/42);

  std::mt19937_64 rng(1);
  const Tensor features = uniform({4, 32, 32}, -1.0, 1.0, rng);

  const ForwardTrace trace = module.record(features);
  std::cout << "output shape " << to_string(trace.output().shape()) << ", imaginary residue "
            << trace.imag_residue() << '\n';

  // Gradient of sum(output^2) / 2 is the output itself.
  const Backprop grads = module.backward(trace, trace.output());
  double norm = 0.0;
  for (double g : grads.input_grad.data()) norm += g * g;
  std::cout << "|dL/dx| = " << std::sqrt(norm) << '\n';
  for (const auto& name : {"amp.wq", "phase.e", "amp.mlp.b2"}) {
    double n = 0.0;
    for (double g : grads.param_grads.at(name).data()) n += g * g;
    std::cout << "|dL/d" << name << "| = " << std::sqrt(n) << '\n';
  }

  const auto [amp_gate, phase_gate] = module.export_modulation(features);
  std::cout << "amplitude gate range [" << *std::min_element(amp_gate.data().begin(), amp_gate.data().end())
            << ", " << *std::max_element(amp_gate.data().begin(), amp_gate.data().end()) << "]\n";
  return 0;
}
