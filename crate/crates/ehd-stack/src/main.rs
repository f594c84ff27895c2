use clap::Parser;

use ehd_stack::cli::{self, RunConfig};

fn main() {
    let config = RunConfig::parse();
    if let Err(e) = cli::run(config) {
        eprintln!("{}", cli::error_json(&e));
        std::process::exit(cli::exit_code(&e));
    }
}
