use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = devpulse_cli::Cli::parse();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    if let Err(e) = devpulse_cli::run(cli, &mut out) {
        eprintln!("devpulse: {e}");
        std::process::exit(e.exit_code());
    }
}
