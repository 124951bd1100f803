use clap::Parser;

use stabsim_cli::args::Cli;

fn main() {
    let cli = Cli::parse();
    if let Err(err) = stabsim_cli::run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(stabsim_cli::exit_code(&err));
    }
}
