fn main() {
    std::process::exit(modalign::cli::run(std::env::args_os()));
}
