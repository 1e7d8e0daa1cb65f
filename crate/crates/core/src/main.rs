fn main() {
    std::process::exit(nbstein::cli::main_with_args(std::env::args_os()));
}
