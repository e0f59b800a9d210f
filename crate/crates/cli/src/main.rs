fn main() {
    std::process::exit(fairaudit_cli::run_cli(std::env::args_os()));
}
