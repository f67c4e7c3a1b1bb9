// Writes the golden-frame corpus: one <name>.bin per message plus
// manifest.json describing every field.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "fixture_corpus.hpp"

int main(int argc, char** argv) {
  CLI::App app{"replaynet-fixtures: emit golden protocol frames"};
  std::string out = "fixtures";
  app.add_option("--out", out, "output directory")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  namespace fs = std::filesystem;
  using namespace replaynet;
  try {
    fs::create_directories(out);
    auto corpus = fixtures::corpus();
    for (const auto& f : corpus) {
      auto frame = wire::encode(f.message);
      std::ofstream file(fs::path(out) / (f.name + ".bin"), std::ios::binary);
      file.write(reinterpret_cast<const char*>(frame.data()), static_cast<std::streamsize>(frame.size()));
      if (!file) throw std::runtime_error("cannot write " + f.name + ".bin");
    }
    std::ofstream manifest(fs::path(out) / "manifest.json");
    manifest << fixtures::manifest(corpus).dump(2) << '\n';
    if (!manifest) throw std::runtime_error("cannot write manifest.json");
    std::cout << "wrote " << corpus.size() << " fixtures to " << out << "\n";
  } catch (const std::exception& e) {
    std::cerr << "replaynet-fixtures: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
