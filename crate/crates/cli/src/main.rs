fn main() {
    std::process::exit(reviewlens_cli::run(std::env::args_os()));
}
