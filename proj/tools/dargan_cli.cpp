// Copyright 2026 The dargan-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dargan/cli.hpp"

int main(int argc, char** argv) { return dargan::cli::Main(argc, argv); }
