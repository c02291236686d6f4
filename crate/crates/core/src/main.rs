fn main() {
    std::process::exit(orthant::cli::main_with_args(std::env::args_os()));
}
