use clap::Parser;

fn main() {
    let cli = arcbo::cli::Cli::parse();
    let code = arcbo::cli::run(cli, &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
