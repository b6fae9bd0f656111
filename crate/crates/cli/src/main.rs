fn main() {
    std::process::exit(coterm_cli::run(std::env::args_os()));
}
