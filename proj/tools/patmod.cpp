#include "patmod/cli.hpp"

int main(int argc, char** argv) { return patmod::cli::run(argc, argv); }
