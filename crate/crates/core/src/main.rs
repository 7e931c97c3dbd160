fn main() {
    std::process::exit(rht::cli::run(std::env::args_os()));
}
