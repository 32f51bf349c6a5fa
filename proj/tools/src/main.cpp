#include "commands.hpp"

int main(int argc, char** argv) { return hsp::app::run_cli(argc, argv); }
