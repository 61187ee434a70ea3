#include "lqr/harness.hpp"

int main(int argc, char** argv) { return lqr::cli_main(argc, argv); }
