#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace sharplab {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;
inline constexpr int kExitAssertion = 4;

struct CommandOptions {
    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed_override;
    int jobs = 1;
    bool verbose = false;
};

// Each command parses and validates its JSON config up front (exit 2 on any
// schema problem), runs, and writes its outputs under out_dir. Runtime
// failures exit 3 with a diagnostic on stderr; cmd_invariance exits 4 when an
// invariance assertion fails.
int cmd_measure(const CommandOptions& opt);
int cmd_diaglin(const CommandOptions& opt);
int cmd_invariance(const CommandOptions& opt);
int cmd_pool(const CommandOptions& opt);
int cmd_gen_task(const CommandOptions& opt);

}  // namespace sharplab
