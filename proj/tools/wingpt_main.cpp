#include "wingpt/cli.hpp"

int main(int argc, char** argv) { return wingpt::cli::dispatch(argc, argv); }
