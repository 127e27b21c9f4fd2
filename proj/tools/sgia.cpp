// SPDX-License-Identifier: Apache-2.0

#include "sgia/cli.hpp"

int main(int argc, char** argv) { return sgia::run_cli(argc, argv); }
