fn main() {
    std::process::exit(eqq::cli::main_with_args(std::env::args_os()));
}
