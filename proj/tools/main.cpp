#include <iostream>

#include "faceedit_cli/commands.hpp"

int main(int argc, char** argv) {
  return faceedit::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
