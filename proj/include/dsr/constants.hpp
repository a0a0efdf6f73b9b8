#pragma once

#include <numbers>

namespace dsr::constants {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

// CODATA 2018
inline constexpr double hbar = 1.054571817e-34;      // J s
inline constexpr double bohr_magneton = 9.2740100783e-24; // J/T

// NV electron spin
inline constexpr double nv_g_factor = 2.0028;
inline constexpr double nv_zero_field_splitting = 2.87e9; // Hz
inline constexpr double nv_gyromagnetic_ratio = 2.8e6;    // Hz/G

} // namespace dsr::constants
