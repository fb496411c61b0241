#include "ogfm/cli.hpp"

int main(int argc, char** argv) { return ogfm::cli::run(argc, argv); }
