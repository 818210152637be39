fn main() {
    std::process::exit(deepmr::cli::main_with_args(std::env::args_os()));
}
