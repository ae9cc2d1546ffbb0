#include "ltpinn/harness.hpp"

int main(int argc, char** argv) { return ltpinn::harness::cli_main(argc, argv); }
