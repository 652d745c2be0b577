use clap::Parser;

fn main() {
    let cli = bellsim_cli::app::Cli::parse();
    match bellsim_cli::app::execute(&cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
        }
        Err(e) => {
            eprintln!("bellsim: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
