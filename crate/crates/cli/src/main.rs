fn main() {
    std::process::exit(mlift_cli::app::run_from(std::env::args_os()));
}
