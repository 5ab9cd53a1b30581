use boltzmann_cli::{run, Cli};
use clap::Parser;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version are not errors
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(&cli) {
        eprintln!("{}", serde_json::to_string(&e.record()).expect("error records serialize"));
        std::process::exit(e.exit_code());
    }
}
