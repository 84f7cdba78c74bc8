#include "dgm/cli.hpp"

int main(int argc, char** argv) { return dgm::run_cli(argc, argv); }
