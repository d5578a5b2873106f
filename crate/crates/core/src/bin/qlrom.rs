fn main() {
    std::process::exit(qlrom::cli::main_with_args(std::env::args_os()));
}
