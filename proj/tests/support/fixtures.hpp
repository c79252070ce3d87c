#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "flowdialog/flowgraph.hpp"
#include "flowdialog/llm.hpp"

namespace testsupport {

std::filesystem::path fixture_path(const std::string& relative);

std::shared_ptr<const flowdialog::Flowchart> load_fixture(const std::string& relative);

/// car_starter.json, eight nodes:
///   n_root -yes-> n_fuel | -no-> n_open
///   n_open -yes-> n_fuse | -no-> n_battery -done-> n_retry
///   n_fuse -yes-> n_replace | -no-> n_wiring
std::shared_ptr<const flowdialog::Flowchart> car_flowchart();

/// Echo binding for closed-loop runs: the opening self-loop never advances,
/// intent classification echoes the user's answer, rephrasing echoes the
/// node text.
std::shared_ptr<flowdialog::llm::ScriptedBinding> closed_loop_binding();

/// Every *.json / *.puml file under tests/fixtures/flowcharts.
std::vector<std::filesystem::path> flowchart_fixture_files();

/// A scratch directory unique to this process, removed at exit.
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace testsupport
