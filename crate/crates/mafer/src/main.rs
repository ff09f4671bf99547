fn main() {
    std::process::exit(mafer::cli::run(std::env::args_os()));
}
