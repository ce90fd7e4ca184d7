use clap::Parser;

fn main() {
    let cli = rfsample::cli::Cli::parse();
    if let Err(err) = rfsample::cli::run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
