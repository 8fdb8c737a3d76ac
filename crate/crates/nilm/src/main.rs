fn main() {
    std::process::exit(nilm::cli::run(std::env::args_os()));
}
