use clap::Parser;

use predictor_cert::cli_report::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
