fn main() {
    std::process::exit(yamabe_core::cli::run(std::env::args_os()));
}
