#include "gnn_esr/cli.hpp"

int main(int argc, char** argv) { return gnn_esr::cli::run(argc, argv); }
