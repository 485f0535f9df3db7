#include "stc/cli/cli.hpp"

int main(int argc, char** argv) { return stc::cli::run_main(argc, argv); }
