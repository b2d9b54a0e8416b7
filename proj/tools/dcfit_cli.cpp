#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "dcfit/runner.hpp"

namespace fs = std::filesystem;
using namespace dcfit;

namespace {

void print_summary(const runner::RunReport& r) {
  std::cout << "scenario " << r.scenario << " seed " << r.seed << '\n';
  for (std::size_t i = 0; i < r.reports.size(); ++i) {
    const auto& rep = r.reports[i];
    std::cout << "  report " << i << " t=" << to_us(rep.t_confirmed) << "us initiator=" << r.port_label(rep.initiator)
              << " loop=" << rep.loop_ports.size() << " trigger=" << r.port_label(rep.trigger) << " ("
              << detect::to_string(rep.trigger_location) << ") hops=" << rep.hop_count
              << (r.adjudication.report_true[i] ? " TP" : " FP") << '\n';
  }
  for (const auto& a : r.recoveries) {
    std::cout << "  recovery t=" << to_us(a.time) << "us";
    if (a.drained) std::cout << " drained " << r.port_label(*a.drained) << " (" << a.packets << " pkts)";
    if (!a.trigger_action.empty()) std::cout << " " << a.trigger_action;
    if (!a.error.empty()) std::cout << " error: " << a.error;
    std::cout << '\n';
  }
  std::cout << "  incidents " << r.adjudication.incidents.size() << " TP " << r.adjudication.true_positives << " FP "
            << r.adjudication.false_positives << " FN " << r.adjudication.false_negatives << '\n';
  std::cout << "  detector messages " << r.messages.detector_messages() << " pause frames " << r.messages.pause_frames
            << '\n';
  std::cout << "  trace " << hex64(r.trace_hash) << " (" << r.trace_records << " records), wall " << r.wall_seconds
            << " s\n";
}

int report_command(const fs::path& dir, const std::string& format) {
  std::ifstream in(dir / "report.json");
  if (!in) {
    std::cerr << "error: no report.json in " << dir << '\n';
    return 2;
  }
  const auto j = Json::parse(in);
  if (format == "json") {
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << "index,initiator,t_confirmed_us,trigger,trigger_location,hop_count,loop_length,true_positive,latency_us\n";
    std::size_t i = 0;
    for (const auto& rep : j.at("reports")) {
      std::cout << i++ << ',' << rep.at("initiator").get<std::string>() << ',' << rep.at("t_confirmed_us").get<double>()
                << ',' << rep.at("trigger").get<std::string>() << ',' << rep.at("trigger_location").get<std::string>()
                << ',' << rep.at("hop_count").get<int>() << ',' << rep.at("loop_ports").size() << ','
                << (rep.at("true_positive").get<bool>() ? 1 : 0) << ',' << rep.value("latency_us", -1.0) << '\n';
    }
  }
  return j.at("clean").get<bool>() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deadlock detection simulator for PFC lossless networks"};
  app.require_subcommand(1);

  std::string scenario_arg;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool trace = false;
  auto* run = app.add_subcommand("run", "Run one scenario file or built-in scenario");
  run->add_option("scenario", scenario_arg, "Scenario YAML file or built-in name")->required();
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--out", out_dir, "Directory for report.json, throughput.csv, oracle.jsonl");
  run->add_flag("--trace", trace, "Also write trace.jsonl");

  std::size_t count = 100;
  std::uint64_t fuzz_seed = 1;
  unsigned threads = 0;
  auto* fuzz = app.add_subcommand("fuzz", "Run randomly generated scenarios");
  fuzz->add_option("--count", count, "Number of scenarios")->capture_default_str();
  fuzz->add_option("--seed", fuzz_seed, "Campaign seed")->capture_default_str();
  fuzz->add_option("--threads", threads, "Worker threads (0 = all cores)");
  std::string fuzz_dump;
  fuzz->add_option("--dump", fuzz_dump, "Write each generated scenario YAML into this directory");

  app.add_subcommand("list-scenarios", "List built-in scenarios");

  std::string run_dir;
  std::string format = "json";
  auto* report = app.add_subcommand("report", "Print the report of a finished run");
  report->add_option("run-dir", run_dir, "Directory given to run --out")->required();
  report->add_option("--format", format, "Output format")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();

  std::string export_dir;
  auto* exp = app.add_subcommand("export-scenarios", "Write every built-in scenario as YAML");
  exp->add_option("dir", export_dir, "Target directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const auto sc = scenario::load_scenario(scenario_arg);
      runner::RunOptions opts;
      opts.seed = seed;
      const auto r = runner::run(sc, opts);
      print_summary(r);
      if (!out_dir.empty()) runner::write_run_dir(r, out_dir, trace);
      return r.clean() ? 0 : 1;
    }
    if (fuzz->parsed()) {
      if (!fuzz_dump.empty()) {
        fs::create_directories(fuzz_dump);
        std::mt19937_64 seeder(fuzz_seed);
        for (std::size_t i = 0; i < count; ++i) {
          const auto s = seeder() % 1'000'000'000ULL;
          std::ofstream(fs::path(fuzz_dump) / ("fuzz_" + std::to_string(s) + ".yaml")) << runner::generate_fuzz_yaml(s);
        }
      }
      const auto summary = runner::fuzz_campaign(count, fuzz_seed, threads);
      for (const auto& c : summary.cases) {
        std::cout << "seed " << c.seed << " switches " << c.switches << " reports " << c.reports << " incidents "
                  << c.incidents << " FP " << c.false_positives << " FN " << c.false_negatives;
        if (!c.error.empty()) std::cout << " error: " << c.error;
        std::cout << '\n';
      }
      std::cout << "total FP " << summary.false_positives << " FN " << summary.false_negatives << " errors "
                << summary.errors << " wall " << summary.wall_seconds << " s\n";
      return summary.clean() ? 0 : 1;
    }
    if (app.got_subcommand("list-scenarios")) {
      for (const auto& name : scenario::builtin_names()) {
        const auto sc = scenario::builtin(name);
        std::cout << name << "  " << sc.description;
        if (sc.description.empty() || sc.description.back() != '\n') std::cout << '\n';
      }
      return 0;
    }
    if (report->parsed()) return report_command(run_dir, format);
    if (exp->parsed()) {
      fs::create_directories(export_dir);
      for (const auto& name : scenario::builtin_names())
        std::ofstream(fs::path(export_dir) / (name + ".yaml")) << *scenario::builtin_text(name);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
