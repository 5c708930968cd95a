fn main() {
    std::process::exit(derivbound_cli::run(std::env::args_os()));
}
