fn main() {
    std::process::exit(depmix_cli::main_with_args(std::env::args_os()));
}
