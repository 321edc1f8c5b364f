use clap::Parser;

fn main() {
    let cli = adchain::cli::Cli::parse();
    match adchain::cli::run(&cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
