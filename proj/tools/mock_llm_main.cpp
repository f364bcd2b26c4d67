// Standalone scripted chat-completions server for manual runs against the CLI.
#include <iostream>

#include <CLI11.hpp>

#include "mock_llm.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Scripted OpenAI-compatible chat-completions server"};
  std::string fixture;
  int port = 0;
  app.add_option("fixture", fixture, "Fixture JSON")->required();
  app.add_option("--port", port, "Port (0 picks a free one)");
  CLI11_PARSE(app, argc, argv);
  try {
    uqgate::mock::MockLlmServer server(uqgate::mock::load_llm_fixture(fixture), port);
    std::cout << server.endpoint() << std::endl;
    server.wait();
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  return 0;
}
