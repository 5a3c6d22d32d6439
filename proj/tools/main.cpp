#include "cli.hpp"

int main(int argc, char** argv) { return farmhazard::cli::run(argc, argv); }
