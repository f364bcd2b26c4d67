// Standalone model-free similarity sidecar speaking the /similarity protocol.
#include <iostream>

#include <CLI11.hpp>

#include "mock_sim.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Model-free similarity sidecar (Jaccard / token overlap)"};
  int port = 0;
  uqgate::mock::SimFaults faults;
  app.add_option("--port", port, "Port (0 picks a free one)");
  app.add_option("--unhealthy-first", faults.unhealthy_first_n, "Answer 503 to the first N health probes");
  CLI11_PARSE(app, argc, argv);
  try {
    uqgate::mock::MockSimServer server(faults, port);
    std::cout << server.endpoint() << std::endl;
    server.wait();
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  return 0;
}
