#include "uqgate/cli.hpp"

int main(int argc, char** argv) { return uqgate::cli::main(argc, argv); }
