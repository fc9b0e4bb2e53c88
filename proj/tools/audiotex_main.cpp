#include <iostream>

#include "audiotex/cli.hpp"

int main(int argc, char** argv) {
  using namespace audiotex::cli;
  CliConfig cfg;
  try {
    cfg = parse_args(argc, argv);
  } catch (const HelpRequested& help) {
    std::cout << help.what();
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "audiotex: " << e.what() << "\nRun with --help for usage.\n";
    return 2;
  }
  return run(cfg);
}
