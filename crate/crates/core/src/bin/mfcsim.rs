use clap::Parser;
use mfcsim::cli::{execute, Cli};

fn main() {
    env_logger::init();
    std::process::exit(execute(Cli::parse()));
}
