// Replay/shared-memory server. Runs until SIGINT or SIGTERM, then stops
// cleanly and writes the stats CSV.

#include <csignal>
#include <ctime>
#include <iostream>

#include "CLI11.hpp"
#include "replaynet/server.hpp"

int main(int argc, char** argv) {
  using namespace replaynet;
  CLI::App app{"replaynet-server: prioritized replay over TCP"};
  ServerConfig config;
  std::string mode = "B";
  std::string listen = "127.0.0.1:7700";
  std::string stats_csv;
  unsigned stats_interval = 0;
  app.add_option("--mode", mode, "A: shared-memory queue, B: co-located replay")
      ->check(CLI::IsMember({"A", "B"}))
      ->capture_default_str();
  app.add_option("--listen", listen, "HOST:PORT; port 0 picks a free one")->capture_default_str();
  app.add_option("--capacity", config.capacity)->capture_default_str();
  app.add_option("--alpha", config.alpha)->capture_default_str();
  app.add_option("--queue-batches", config.queue_batches, "mode A ingress bound, in pushed batches")
      ->capture_default_str();
  app.add_option("--stats-csv", stats_csv, "written on shutdown");
  app.add_option("--stats-interval", stats_interval, "also rewrite the stats CSV every N seconds");
  app.add_option("--state-dim", config.state_dim)->capture_default_str();
  app.add_option("--action-count", config.action_count)->capture_default_str();
  app.add_option("--seed", config.seed)->capture_default_str();
  app.add_flag("--stratified", config.stratified, "one draw per equal slice of the total");
  CLI11_PARSE(app, argc, argv);

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  // Block before any thread starts so only the wait below sees them.
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  try {
    config.mode = mode == "A" ? ServerMode::kSharedMemory : ServerMode::kColocatedReplay;
    config.listen = Endpoint::parse(listen);
    Server server(config);
    server.start();
    std::cout << "listening on " << server.endpoint().to_string() << " mode " << mode << std::endl;

    for (;;) {
      int sig = 0;
      if (stats_interval == 0 || stats_csv.empty()) {
        sigwait(&signals, &sig);
        break;
      }
      timespec timeout{static_cast<time_t>(stats_interval), 0};
      sig = sigtimedwait(&signals, nullptr, &timeout);
      if (sig > 0) break;
      server.write_stats_csv(stats_csv);
    }
    server.stop();
    if (!stats_csv.empty()) server.write_stats_csv(stats_csv);
    auto s = server.stats().snapshot();
    std::cout << "stopped: " << s.experiences_added << " experiences added, " << s.experiences_sampled
              << " sampled, " << s.param_sets << " parameter sets" << std::endl;
  } catch (const std::exception& e) {
    std::cerr << "replaynet-server: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
