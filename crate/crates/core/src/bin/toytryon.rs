fn main() {
    // Panics are reported as error JSON by the CLI itself.
    std::panic::set_hook(Box::new(|_| {}));
    std::process::exit(toytryon::cli::main_with_args(std::env::args_os()));
}
