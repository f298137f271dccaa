use clap::Parser;

fn main() {
    let cli = scoreflow::cli::Cli::parse();
    if let Err(e) = scoreflow::cli::run(&cli) {
        eprintln!("error[{}]: {e}", e.class());
        std::process::exit(e.exit_code());
    }
}
