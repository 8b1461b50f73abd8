#include "cli.hpp"

int main(int argc, char** argv) { return glasskit::cli::run(argc, argv); }
