// lunasim command line: headless and served scenario runs, replay.
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "lunasim/scenario/mission.hpp"
#include "lunasim/scenario/serve.hpp"

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop.store(true); }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  using namespace lunasim;
  CLI::App app{"lunasim: lunar multi-rover mission simulator"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run a scenario");
  std::string scenario_file;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint16_t> port;
  std::optional<double> factor;
  std::string metrics_out;
  bool omniscient = false;
  bool quiet = false;
  run->add_option("--scenario", scenario_file, "Scenario file")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--serve", port, "Serve operator consoles on this TCP port (0 picks one)");
  run->add_option("--realtime-factor", factor, "Simulated seconds per wall-clock second")
      ->check(CLI::PositiveNumber);
  run->add_option("--metrics-out", metrics_out, "Write the metrics log (JSON lines) here");
  run->add_flag("--omniscient", omniscient, "Include true rover poses in console snapshots");
  run->add_flag("--quiet", quiet, "Print only the summary line");

  auto* rep = app.add_subcommand("replay", "Re-run a metrics log and compare it line by line");
  std::string log_file;
  rep->add_option("--log", log_file, "Metrics log written by `run`")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      scenario::RunOptions opt;
      opt.seed = seed;
      opt.omniscient = omniscient;
      scenario::Mission mission(read_file(scenario_file), opt);
      std::ofstream out;
      if (!metrics_out.empty()) {
        out.open(metrics_out, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + metrics_out);
        mission.log().set_sink(&out);
      }
      const auto t0 = std::chrono::steady_clock::now();
      if (port || factor) {
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        scenario::PacedOptions p;
        p.realtime_factor = factor.value_or(1.0);
        p.port = port;
        p.stop = &g_stop;
        p.on_listening = [](std::uint16_t bound) { std::cout << "serving on 127.0.0.1:" << bound << std::endl; };
        scenario::run_paced(mission, p);
      } else {
        mission.start();
        const double step = mission.spec().mission.metrics_period_s;
        while (!mission.done()) {
          mission.advance_to(mission.now() + step);
          if (!quiet) {
            const auto c = mission.coverage();
            std::cerr << "t=" << mission.now() << "s coverage=" << c.fraction() << "\n";
          }
        }
        mission.finish();
      }
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      const auto summary = nlohmann::json::parse(mission.log().lines().back());
      std::cout << "coverage=" << summary["coverage_fraction"].get<double>()
                << " checksum=" << summary["checksum"].get<std::string>() << " sim_s=" << mission.now()
                << " wall_s=" << wall << std::endl;
      return 0;
    }
    const auto verdict = scenario::replay(scenario::read_log_lines(log_file));
    std::cout << to_string(verdict.status) << ": " << verdict.message << std::endl;
    if (verdict.status == scenario::ReplayVerdict::Status::kDiverged) {
      std::cout << "first divergence at line " << verdict.line << "\n  recorded: " << verdict.expected.substr(0, 400)
                << "\n  replayed: " << verdict.actual.substr(0, 400) << std::endl;
    }
    return verdict.identical() ? 0 : (verdict.status == scenario::ReplayVerdict::Status::kRefused ? 3 : 2);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
}
