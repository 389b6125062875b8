#include "tbm/cli.hpp"

int main(int argc, char** argv) { return tbm::run_cli(argc, argv); }
