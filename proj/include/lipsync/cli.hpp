#pragma once

namespace lipsync::cli {

// Exit codes: 0 success, 1 usage error, 2 data/format/I-O error.
int run(int argc, const char* const* argv);

}  // namespace lipsync::cli
