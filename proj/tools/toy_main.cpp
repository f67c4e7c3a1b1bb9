// Tabular Q-learning on a GridWorld through an in-process replay server.
// Exits 0 when the greedy policy is optimal, 1 when the budget runs out.

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "replaynet/harness/toy_training.hpp"

int main(int argc, char** argv) {
  using namespace replaynet;
  CLI::App app{"replaynet-toy: end-to-end GridWorld training over loopback"};
  std::string grid = "5x5";
  std::string out;
  harness::ToyConfig config;
  app.add_option("--grid", grid, "grid size WxH; start top-left, goal bottom-right")->capture_default_str();
  app.add_option("--actors", config.actors, "actor threads")->capture_default_str()->check(CLI::Range(1u, 64u));
  app.add_option("--seed", config.seed)->capture_default_str();
  app.add_option("--out", out, "learning-curve CSV path");
  app.add_option("--max-iterations", config.max_iterations, "learner iteration budget")->capture_default_str();
  app.add_option("--gamma", config.gamma)->capture_default_str();
  app.add_option("--n-update", config.n_update, "target table refresh period")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    config.grid = harness::GridWorld::parse_size(grid);
    std::ofstream file;
    if (!out.empty()) {
      file.open(out);
      if (!file) {
        std::cerr << "cannot open " << out << "\n";
        return 2;
      }
    }
    auto r = harness::run_toy_training(config, out.empty() ? nullptr : &file);
    std::cout << (r.converged ? "converged" : "did not converge") << " after " << r.iterations
              << " learner iterations: greedy path " << r.greedy_steps << " steps, optimal "
              << r.optimal_steps << "; " << r.experiences_added << " experiences added in " << r.elapsed_s
              << " s\n";
    return r.converged ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "replaynet-toy: " << e.what() << "\n";
    return 2;
  }
}
