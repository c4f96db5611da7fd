fn main() {
    std::process::exit(arma_cli::run(std::env::args_os()));
}
