fn main() {
    std::process::exit(locsim::cli::run(std::env::args_os()));
}
