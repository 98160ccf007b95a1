use clap::Parser;

fn main() {
    let cli = invedit::cli::Cli::parse();
    if let Err(e) = invedit::cli::run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
