// Latency sweep over actor counts. Writes the long-format report to --out and
// the stacked breakdown next to it (<out>.breakdown.csv).

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "replaynet/harness/bench.hpp"

namespace {

std::vector<std::uint32_t> sweep_up_to(std::uint32_t n) {
  std::vector<std::uint32_t> counts;
  for (std::uint32_t a = 1; a < n; a *= 2) counts.push_back(a);
  counts.push_back(n);
  return counts;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace replaynet;
  CLI::App app{"replaynet-bench: push/pull/sample latency sweep over loopback"};
  harness::BenchConfig config;
  std::string mode = "B";
  std::uint32_t actors = 8;
  std::string server;
  bool spawn = false;
  bool single = false;
  bool small = false;
  std::string out = "report.csv";
  std::uint32_t duration_ms = 3000;
  app.add_option("--mode", mode, "A: learner-side replay, B: co-located replay")
      ->check(CLI::IsMember({"A", "B"}))
      ->capture_default_str();
  app.add_option("--actors", actors, "largest actor count; the sweep doubles from 1")
      ->check(CLI::Range(1u, 256u))
      ->capture_default_str();
  app.add_option("--server", server, "HOST:PORT of a running replaynet-server");
  app.add_flag("--spawn-server", spawn, "start an in-process server for each point, on --server if given");
  app.add_flag("--single", single, "run only --actors, not the sweep");
  app.add_option("--out", out)->capture_default_str();
  app.add_option("--seed", config.seed)->capture_default_str();
  app.add_flag("--small", small, "state_dim 64 instead of 28224");
  app.add_option("--state-dim", config.state_dim, "overrides --small");
  app.add_option("--duration-ms", duration_ms, "measured time per point")->capture_default_str();
  app.add_option("--capacity", config.replay_capacity)->capture_default_str();
  app.add_option("--param-bytes", config.param_blob_bytes)->capture_default_str();
  app.add_flag("--gated-pull", config.gated_pull, "skip parameter downloads when unchanged");
  CLI11_PARSE(app, argc, argv);

  if (server.empty() && !spawn) {
    std::cerr << "replaynet-bench: give --server, --spawn-server, or both\n";
    return 2;
  }
  if (small && app.count("--state-dim") == 0) config.state_dim = 64;
  config.mode = mode == "A" ? ServerMode::kSharedMemory : ServerMode::kColocatedReplay;
  config.duration = std::chrono::milliseconds(duration_ms);

  try {
    if (!server.empty()) config.server = Endpoint::parse(server);
    config.spawn_server = spawn;
    auto counts = single ? std::vector<std::uint32_t>{actors} : sweep_up_to(actors);
    std::vector<harness::BenchReport> reports;
    for (auto n : counts) {
      config.actor_count = n;
      reports.push_back(harness::run_bench(config));
      const auto& r = reports.back();
      std::cout << "mode " << mode << " actors " << n << ": " << r.push_throughput << " exp/s pushed, push p50 "
                << r.push.p50_us << " us, pull p50 " << r.pull_params.p50_us << " us, sample p50 "
                << r.learner_sample.p50_us << " us, " << r.learner_iterations << " learner iterations\n";
    }
    std::ofstream report(out);
    std::ofstream breakdown(out + ".breakdown.csv");
    if (!report || !breakdown) {
      std::cerr << "replaynet-bench: cannot write " << out << "\n";
      return 2;
    }
    harness::write_bench_csv(report, reports);
    harness::emit_breakdown(breakdown, reports);
  } catch (const TransportError& e) {
    std::cerr << "replaynet-bench: cannot reach server: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "replaynet-bench: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
