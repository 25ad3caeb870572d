fn main() {
    std::process::exit(fx_cli::main_with_args(std::env::args_os()));
}
