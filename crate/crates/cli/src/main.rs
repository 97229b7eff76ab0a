use clap::Parser;

fn main() {
    let cli = loopflow_cli::Cli::parse();
    std::process::exit(loopflow_cli::run(cli));
}
