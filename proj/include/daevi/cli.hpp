#pragma once

namespace daevi {

// Full command-line surface (synth | train | infer | eval | gradcheck).
// Returns the process exit status: 0 success, 1 usage/config error, 2
// data/format error, 3 numerical failure.
int run_cli(int argc, const char* const* argv);

} // namespace daevi
