fn main() {
    std::process::exit(sntk_cli::run(std::env::args_os()));
}
