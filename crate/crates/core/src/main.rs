fn main() {
    std::process::exit(attncond::cli::main_with_args(std::env::args_os()));
}
