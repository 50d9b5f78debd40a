#include "pgsmm/cli.hpp"

int main(int argc, char** argv) { return pgsmm::run_cli(argc, argv); }
