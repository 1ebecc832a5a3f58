#include "miner/cli.hpp"

int main(int argc, char** argv) { return miner::run_cli(argc, argv); }
