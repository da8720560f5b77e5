mod args;
mod mutants;
mod run;

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    match args::Args::try_parse() {
        Ok(args) => run::main(&args),
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            ExitCode::SUCCESS
        }
        Err(e) => {
            let _ = e.print();
            eprintln!("result=error walks=0 time_ms=0");
            ExitCode::from(2)
        }
    }
}
