fn main() {
    std::process::exit(dynid_core::cli::main_with_args(std::env::args_os()));
}
