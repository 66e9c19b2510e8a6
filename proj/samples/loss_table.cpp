// Prints every pairwise loss and its chosen-side gradient over a range of margins.

#include <cstdio>

#include "prefkit/losses.hpp"

int main() {
  using namespace prefkit;
  const double margins[] = {-4.0, -1.0, 0.0, 0.5, 1.0, 2.0, 4.0};
  std::printf("%-36s", "loss \\ margin");
  for (double d : margins) std::printf("%16.1f", d);
  std::printf("\n");
  for (LossKind kind : kAllLossKinds) {
    LossSpec spec;
    spec.kind = kind;
    std::printf("%-36s", std::string(display_name(kind)).c_str());
    // CE depends on both rewards, so the margin is split around zero.
    for (double d : margins) {
      const LossEval e = loss_eval(spec, d / 2.0, -d / 2.0);
      std::printf("  %6.3f/%+7.3f", e.value, e.grad_chosen);
    }
    std::printf("\n");
  }
}
