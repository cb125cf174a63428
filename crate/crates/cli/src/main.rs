use clap::Parser;

fn main() {
    let cli = pta::args::Cli::parse();
    match pta::run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("{}", e.to_json());
            std::process::exit(e.exit);
        }
    }
}
