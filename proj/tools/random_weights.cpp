// Writes a weights container with seeded random parameters for a network
// descriptor. Lets the whole pipeline run without converted VGG weights.

#include <iostream>

#include <CLI11.hpp>

#include "dyntex/network.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Random weights for a network descriptor", "dyntex_random_weights"};
  std::string net, out;
  std::uint64_t seed = 0;
  app.add_option("--net", net, "Network descriptor (JSON)")->required();
  app.add_option("--out", out, "Weights container to write")->required();
  app.add_option("--seed", seed, "Generator seed");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  try {
    const auto descriptor = dyntex::load_descriptor(net);
    dyntex::save_weights(dyntex::make_random_network<float>(descriptor, seed), out);
  } catch (const dyntex::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == dyntex::ErrorCode::io ? 3 : 4;
  }
  return 0;
}
