#include "splatseg/cli.hpp"

int main(int argc, char** argv) { return splatseg::cli::run(argc, argv); }
