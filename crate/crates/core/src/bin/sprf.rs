fn main() {
    std::process::exit(sprf::cli::run(std::env::args_os()));
}
