use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = pdwrist_cli::Cli::parse();
    if let Err(e) = pdwrist_cli::run(&cli) {
        eprintln!("{}", pdwrist_cli::error_line(&e));
        std::process::exit(2);
    }
}
