fn main() {
    std::process::exit(ablr::cli::main_with_args(std::env::args_os()));
}
