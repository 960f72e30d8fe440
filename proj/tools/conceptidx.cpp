// Copyright 2026 The conceptidx Authors.
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "conceptidx/pipeline.hpp"

int main(int argc, char** argv) { return conceptidx::run_cli(argc, argv, std::cout, std::cerr); }
