use clap::Parser;
use ctdc::cli::Cli;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = ctdc::commands::run(&cli.run_config()) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
