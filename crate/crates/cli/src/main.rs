use clap::Parser;

fn main() {
    let cli = dirichlet_reg_cli::Cli::parse();
    std::process::exit(dirichlet_reg_cli::run(cli));
}
