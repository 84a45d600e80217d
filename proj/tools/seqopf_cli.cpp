#include "seqopf/cli.hpp"

int main(int argc, char** argv) { return seqopf::cli::run(argc, argv, std::cout, std::cerr); }
