fn main() {
    std::process::exit(heraklit::cli::main_with_args(std::env::args_os()));
}
