use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("GRASSROOTS_LOG")).init();
    let cli = grassroots_coins::cli::Cli::parse();
    std::process::exit(grassroots_coins::cli::main_with(cli));
}
