use clap::Parser;

fn main() {
    std::process::exit(pct::cli::execute(pct::cli::Cli::parse()));
}
