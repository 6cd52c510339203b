#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace flpoison {

inline constexpr std::size_t kTrajectoryPoints = 17;
inline constexpr std::size_t kCoordsPerPoint = 3;
inline constexpr std::size_t kOutputWidth = kTrajectoryPoints * kCoordsPerPoint;

// Coordinate order inside a trajectory point.
inline constexpr std::size_t kLateral = 0;
inline constexpr std::size_t kHeight = 1;
inline constexpr std::size_t kForward = 2;

/// Forward distances (meters) of the 17 trajectory points.
inline constexpr std::array<double, kTrajectoryPoints> kTargetDistances = {
    5, 10, 15, 20, 25, 30, 35, 40, 50, 60, 70, 80, 95, 110, 125, 145, 165};

/// One scene image (CHW, values in [0,1]) with its normalized trajectory.
struct Sample {
  std::vector<float> image;
  std::vector<double> target;  // kOutputWidth entries, point-major
  bool poisoned = false;
  std::uint64_t id = 0;        // position in the generated dataset

  friend bool operator==(const Sample&, const Sample&) = default;
};

}  // namespace flpoison
