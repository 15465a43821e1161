#include "invp/cli.hpp"

int main(int argc, char** argv) { return invp::cli::run(argc, argv); }
