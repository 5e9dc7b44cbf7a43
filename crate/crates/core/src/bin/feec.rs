fn main() {
    std::process::exit(feec_core::cli::run(std::env::args_os()));
}
