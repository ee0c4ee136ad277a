#include "fcomb/cli.hpp"

int main(int argc, char** argv) { return fcomb::cli::run(argc, argv); }
