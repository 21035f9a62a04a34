#include "cli.hpp"

int main(int argc, char** argv) { return mier::cli::run(argc, argv); }
