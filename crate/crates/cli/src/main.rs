use clap::Parser;
use injlock_cli::args::Cli;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = injlock_cli::run(&cli) {
        eprintln!("injlock: {e}");
        std::process::exit(e.exit_code());
    }
}
