// Copyright Contributors to the SparseOIT Project
// SPDX-License-Identifier: Apache-2.0
//
#include "commands.hpp"

#include <iostream>

int main(int argc, char **argv) { return soit::cli::run(argc, argv, std::cout, std::cerr); }
