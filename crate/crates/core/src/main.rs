fn main() {
    std::process::exit(suppressor_lab::cli::main_with_args(std::env::args_os()));
}
