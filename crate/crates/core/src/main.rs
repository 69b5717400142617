fn main() {
    std::process::exit(grssm::cli::run(std::env::args_os()));
}
