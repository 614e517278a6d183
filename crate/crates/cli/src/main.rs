fn main() {
    std::process::exit(fsegan_cli::run(std::env::args_os()));
}
