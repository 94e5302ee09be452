fn main() {
    std::process::exit(nonstgm::cli::run(std::env::args_os()));
}
