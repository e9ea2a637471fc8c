use clap::Parser;

fn main() {
    let cli = era::cli::Cli::parse();
    if let Err(e) = era::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
