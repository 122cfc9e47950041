// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <leo/types.hpp>

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace leo::sim
{

struct Vec3
{
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    bool operator==(const Vec3&) const = default;
};

[[nodiscard]] double horizontal_distance(const Vec3& a, const Vec3& b) noexcept;
[[nodiscard]] double distance(const Vec3& a, const Vec3& b) noexcept;

/// Normalizes any angle in degrees to [0, 360).
[[nodiscard]] double normalize_yaw(double degrees) noexcept;
/// Signed difference `to - from` wrapped to [-180, 180).
[[nodiscard]] double signed_angle(double from, double to) noexcept;

struct Pose
{
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    double yaw = 0.0; // degrees, [0, 360); 0 faces +x, 90 faces +y

    [[nodiscard]] Vec3 position() const noexcept { return {x, y, z}; }
    bool operator==(const Pose&) const = default;
};

struct Bounds
{
    Vec3 min;
    Vec3 max;

    [[nodiscard]] bool contains(const Vec3& p) const noexcept;
    bool operator==(const Bounds&) const = default;
};

struct Entity
{
    std::string id;
    std::string class_label;
    Vec3 position;
    bool graspable = false;
    /// Spoken reply of a person entity (delivered by the talk_to_person tool).
    std::string utterance;

    bool operator==(const Entity&) const = default;
};

enum class RobotKind
{
    uav,
    wheeled_arm,
};

[[nodiscard]] const char* to_string(RobotKind kind) noexcept;

struct RobotParams
{
    double speed = 1.0;     // m/s
    double yaw_rate = 90.0; // deg/s
    double reach = 0.8;     // m, horizontal grasp radius

    bool operator==(const RobotParams&) const = default;
};

struct FovParams
{
    double half_angle = 45.0; // degrees, (0, 90]
    double range = 5.0;       // m

    bool operator==(const FovParams&) const = default;
};

/// Duration of a grasp or release.
inline constexpr double kManipulationSeconds = 2.0;
/// Tolerance applied to the inclusive range and sector boundaries.
inline constexpr double kBoundaryEpsilon = 1e-9;

struct World
{
    std::string name;
    Bounds bounds;
    std::vector<Entity> entities;
    RobotKind robot_kind = RobotKind::uav;
    Pose robot_pose;
    RobotParams robot;
    FovParams fov;
    std::optional<std::string> held_entity;
    Vec3 origin;
    double sim_clock = 0.0;
    double coverage_cell = 1.0;
    double container_radius = 0.4;

    [[nodiscard]] const Entity* find(std::string_view id) const noexcept;
    [[nodiscard]] Entity* find(std::string_view id) noexcept;

    bool operator==(const World&) const = default;
};

class ScenarioError : public std::runtime_error
{
public:
    ScenarioError(std::string field_path, const std::string& what):
        std::runtime_error(field_path + ": " + what), _field_path(std::move(field_path))
    {
    }

    [[nodiscard]] const std::string& field_path() const noexcept { return _field_path; }

private:
    std::string _field_path;
};

/// Scenario document: {bounds, robot:{kind, pose, speed, yaw_rate, reach}, fov:{half_angle_deg, range_m},
/// entities:[{id, class, x, y, z, graspable}], origin:[x,y,z]}. Throws ScenarioError.
[[nodiscard]] World world_from_json(const json& doc);
[[nodiscard]] World load_scenario(const std::filesystem::path& path);

/// Complete serializable copy of the world; `world_from_json(snapshot(w)) == w`.
[[nodiscard]] json snapshot(const World& world);

/// Throws std::logic_error if a world invariant is broken.
void check_invariants(const World& world);

// --- actions ----------------------------------------------------------------
// Each action mutates the world, advances sim_clock by the returned sim_elapsed, and
// reports failures as error observations without touching the world.

Observation move_to(World& world, Vec3 target);
Observation rotate_to(World& world, double yaw_degrees);
Observation grasp(World& world, std::string_view entity_id);
Observation release(World& world);

// --- perception -------------------------------------------------------------

struct Detection
{
    std::string id;
    std::string class_label;
    double bearing = 0.0; // degrees relative to the robot's yaw, counter-clockwise positive
    double range = 0.0;   // horizontal metres
    Vec3 position;
};

/// Inclusive sector + range test from a pose (2D; no occlusion).
[[nodiscard]] bool visible_from(const Pose& pose, const FovParams& fov, double x, double y) noexcept;

[[nodiscard]] std::vector<Detection> visible_entities(const World& world, const FovParams& fov,
                                                      std::string_view class_filter = {});

/// Observation data: {count, detections:[{id, class_label, bearing, range, x, y, z}], nearest_*}.
[[nodiscard]] Observation detect(const World& world, const FovParams& fov, std::string_view class_filter = {});

/// Simulated vision-language answer built from the visible set.
[[nodiscard]] Observation vlm_describe(const World& world, const FovParams& fov, std::string_view question);

/// Data record describing the pose; attached to motion observations.
[[nodiscard]] json pose_json(const Pose& pose);

} // namespace leo::sim
