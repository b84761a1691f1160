#pragma once

namespace pbg2p {

// Entry point of the pbg2p tool. Returns 0 on success, 2 on a usage error and
// 1 on any other failure.
int run(int argc, const char* const* argv);

}  // namespace pbg2p
