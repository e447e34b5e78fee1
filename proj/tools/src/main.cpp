#include <iostream>

#include "bvllm/cli.hpp"

int main(int argc, char** argv) { return bvllm::cli::main(argc, argv, std::cout, std::cerr); }
