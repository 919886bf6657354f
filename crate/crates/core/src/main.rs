fn main() {
    std::process::exit(specfilt::cli::run(std::env::args_os()));
}
