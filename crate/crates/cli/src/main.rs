use clap::Parser;

fn main() {
    let cli = steiner_cli::Cli::parse();
    if let Err(e) = steiner_cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
