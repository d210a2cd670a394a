#ifndef PBLAME_CLI_H
#define PBLAME_CLI_H

namespace pblame {

// Full command-line front end. Returns the process exit code: 0 on success,
// the Errc value of a failed module operation, 1 on other failures.
int run_cli(int argc, char** argv);

}  // namespace pblame

#endif
