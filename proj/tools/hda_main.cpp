#include "hda/runner.hpp"

int main(int argc, char** argv) { return hda::cli(argc, argv); }
