// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <leo/agent.hpp>
#include <leo/protocol.hpp>
#include <leo/simworld.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace leo::test
{

inline std::filesystem::path data_dir()
{
    return LEO_TEST_DATA_DIR;
}

inline std::string step(std::string_view message, std::string_view action, json input = json::object())
{
    return protocol::serialize(AgentMessage{std::string(message), std::string(action), std::move(input)});
}

inline std::string final_step(std::string_view report)
{
    return step("done", kFinalAction, {{"report", report}});
}

/// Open 20x20 UAV world with a handful of entities; the default fixture for tool tests.
inline sim::World small_uav_world()
{
    sim::World w;
    w.name = "fixture";
    w.bounds = {{0, 0, 0}, {20, 20, 10}};
    w.robot_kind = sim::RobotKind::uav;
    w.robot_pose = {1, 1, 1, 0};
    w.fov = {45, 5};
    w.origin = {1, 1, 1};
    w.entities = {{"bottle_1", "bottle", {3, 1, 0}, true, ""},
                  {"cup_1", "cup", {1, 3, 0}, true, ""},
                  {"chair_1", "chair", {10, 10, 0}, false, ""}};
    return w;
}

} // namespace leo::test
