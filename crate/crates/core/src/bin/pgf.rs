use clap::Parser;

fn main() {
    std::process::exit(pgf_core::cli::run(pgf_core::cli::Cli::parse()));
}
