fn main() {
    std::process::exit(oplab::cli::run(std::env::args_os()));
}
