mod args;
mod commands;

use clap::Parser;

use args::{Cli, Command};

fn main() {
    let cli = Cli::parse();
    let g = &cli.global;
    let result = match &cli.command {
        Command::Parse(a) => commands::parse(a, g),
        Command::Validate(a) => commands::validate_cmd(a, g),
        Command::Score(a) => commands::score(a, g),
        Command::Train(a) => commands::train_cmd(a, g),
        Command::Predict(a) => commands::predict_cmd(a, g),
        Command::Jury(a) => commands::jury_cmd(a, g),
        Command::Vocab(a) => commands::vocab_cmd(a, g),
    };
    let code = match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("drskit: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
