fn main() {
    std::process::exit(ismarket::main_with_args(std::env::args_os()));
}
