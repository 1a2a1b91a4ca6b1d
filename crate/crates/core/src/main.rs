fn main() {
    std::process::exit(stppfit_core::cli::run(std::env::args_os()));
}
