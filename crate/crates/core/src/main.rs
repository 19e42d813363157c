fn main() {
    std::process::exit(cgexcite::cli::run(std::env::args_os()));
}
