#include "resq/cli.hpp"

int main(int argc, char** argv) { return resq::cli::run(argc, argv); }
