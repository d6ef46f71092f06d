use clap::Parser;
use wmfloq_cli::{run::run, Cli};

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    match run(&cli, &argv) {
        Ok(outcome) => println!("{}", serde_json::to_string_pretty(&outcome.summary).unwrap_or_default()),
        Err(e) => {
            eprintln!("{}", e.report());
            std::process::exit(e.exit_code());
        }
    }
}
