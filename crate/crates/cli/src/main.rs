use clap::Parser;
use effect_risk_cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(w) => {
            println!("wrote {}", w.json.display());
            if let Some(csv) = w.csv {
                println!("wrote {}", csv.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
