use clap::Parser;

fn main() {
    let cli = hetcache::cli::Cli::parse();
    std::process::exit(hetcache::cli::run(cli));
}
