fn main() {
    std::process::exit(starvrjp::cli::main_with_args(std::env::args_os()));
}
