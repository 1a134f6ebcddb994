fn main() {
    std::process::exit(recsteal::cli::main_with_args(std::env::args_os()));
}
