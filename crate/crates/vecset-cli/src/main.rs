//! Command line front end for the set-similarity search engine.
//!
//! Exit codes: 0 success, 1 search/verification failure, 2 usage error,
//! 3 I/O or format error.

mod cmds;
mod verify;

use clap::Parser;

fn main() {
    // Clap handles its own usage errors with exit code 2.
    let cli = cmds::Cli::parse();
    std::process::exit(cmds::run(cli));
}
