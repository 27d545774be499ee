use clap::Parser;
use msbaco_cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = execute(cli) {
        eprintln!("msbaco: {e}");
        std::process::exit(e.exit_code());
    }
}
