fn main() {
    std::process::exit(semimart_cli::run_cli(std::env::args_os()));
}
