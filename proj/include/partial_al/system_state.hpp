#pragma once

#include <array>

namespace partial_al {

/// Per-system bookkeeping held by the simulator. gamma[i] is the latent age at
/// which subsystem i next fails; it is never revealed to acquisition functions.
struct SystemState {
  int system_id = 0;
  double t_age = 0.0;
  std::array<double, 3> agelt{};
  std::array<double, 3> gamma{};
  /// Age at which each gamma was last drawn.
  std::array<double, 3> gamma_origin{};

  friend bool operator==(const SystemState&, const SystemState&) = default;
};

}  // namespace partial_al
