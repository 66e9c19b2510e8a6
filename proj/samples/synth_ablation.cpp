// Trains a linear reward model under each loss on synthetic pairs and prints the
// held-out accuracy table.
//
//   synth_ablation [seed] [dimension] [pairs] [noise]

#include <cstdlib>
#include <iostream>
#include <vector>

#include "prefkit/trainer.hpp"

int main(int argc, char** argv) {
  using namespace prefkit;
  const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 0;
  const std::size_t d = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 16;
  const std::size_t n = argc > 3 ? std::strtoul(argv[3], nullptr, 10) : 5000;
  const double noise = argc > 4 ? std::strtod(argv[4], nullptr) : 0.05;

  const SynthData data = synth_generate(seed, d, n, noise);
  const auto held_out = synth_pairs(data.truth, seed + 1, n, 0.0, "eval");
  std::vector<LossSpec> specs;
  for (LossKind k : kAllLossKinds) specs.push_back(LossSpec{.kind = k});
  TrainConfig cfg;
  cfg.seed = seed;
  std::cout << ablation_table(ablate(data.pairs, held_out, specs, cfg));
}
