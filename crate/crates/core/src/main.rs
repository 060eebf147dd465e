use std::process::ExitCode;

use robust_sketch::cli::{self, ParseExit};

fn main() -> ExitCode {
    env_logger::init();
    let config = match cli::parse_config(std::env::args_os()) {
        Ok(config) => config,
        Err(ParseExit::Display(text)) => {
            println!("{text}");
            return ExitCode::from(0);
        }
        Err(ParseExit::Usage(msg)) => {
            eprintln!("{msg}");
            return ExitCode::from(1);
        }
    };
    ExitCode::from(cli::run(config) as u8)
}
