#include "fixtures.hpp"

#include <algorithm>
#include <unistd.h>

#include "flowdialog/ingest.hpp"

namespace testsupport {

namespace fs = std::filesystem;

fs::path fixture_path(const std::string& relative) { return fs::path(FLOWDIALOG_FIXTURES) / relative; }

std::shared_ptr<const flowdialog::Flowchart> load_fixture(const std::string& relative) {
  return std::make_shared<const flowdialog::Flowchart>(
      flowdialog::ingest::load_flowchart_file(fixture_path(relative)));
}

std::shared_ptr<const flowdialog::Flowchart> car_flowchart() {
  static const auto fc = load_fixture("flowcharts/car_starter.json");
  return fc;
}

std::shared_ptr<flowdialog::llm::ScriptedBinding> closed_loop_binding() {
  return flowdialog::llm::ScriptedBinding::echo({{"task=ground", "NONE"}, {"task=completed", "NONE"}});
}

std::vector<fs::path> flowchart_fixture_files() {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(fixture_path("flowcharts"))) {
    if (e.is_regular_file()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

struct ScratchRoot {
  fs::path path = fs::temp_directory_path() / ("flowdialog_test_" + std::to_string(::getpid()));
  ~ScratchRoot() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

}  // namespace

fs::path scratch_dir(const std::string& name) {
  static ScratchRoot root;
  const fs::path p = root.path / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace testsupport
