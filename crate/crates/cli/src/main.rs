fn main() {
    std::process::exit(crossmodal_cli::main_with_args(std::env::args_os()));
}
