use clap::Parser;

use ciric_dp_cli::args::Cli;
use ciric_dp_cli::commands;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = commands::run(cli.command) {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code);
    }
}
