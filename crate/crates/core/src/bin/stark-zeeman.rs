fn main() {
    std::process::exit(stark_zeeman::cli::main_with_args(std::env::args_os()));
}
