use clap::Parser;

fn main() {
    let cli = talkhead_cli::Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.global.log_level())
        .parse_env("TALKHEAD_LOG")
        .format_timestamp(None)
        .init();
    if let Err(err) = talkhead_cli::run(cli) {
        eprintln!("error: {}", talkhead_cli::error_line(&err));
        std::process::exit(1);
    }
}
