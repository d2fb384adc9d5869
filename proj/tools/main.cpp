#include "coevolve/cli.hpp"

int main(int argc, char** argv) { return coevolve::cli::run(argc, argv); }
