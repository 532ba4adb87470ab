fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(biofilm_sim::cli::cli_run(&args));
}
