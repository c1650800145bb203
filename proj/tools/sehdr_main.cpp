// Copyright Contributors to the sehdr project
// SPDX-License-Identifier: Apache-2.0

#include "sehdr/cli.hpp"

int main(int argc, char** argv) { return sehdr::run_cli(argc, argv); }
