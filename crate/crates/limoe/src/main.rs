fn main() {
    std::process::exit(limoe::cli::run(std::env::args_os()));
}
